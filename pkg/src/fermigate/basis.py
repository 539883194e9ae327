"""Single-particle P1 finite-element basis on the unit interval.

The discrete space is a subspace of H^1(0,1) selected by a boundary
condition on the trace pair (psi(0), psi(1)).  Dirichlet conditions drop
endpoint hats; one-dimensional trace subspaces (quasi-periodic coupling
psi(0) = alpha*psi(1), or a general line span{(a,b)}) are realised exactly
by a single coupled degree of freedom combining the two endpoint half-hats.
All element integrals are closed-form, so assembled matrices carry no
quadrature error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import IndefiniteMatrixError

__all__ = [
    "BoundarySpec",
    "GridBasis",
    "PotentialSpec",
    "Delta",
    "Sampled",
    "HMinusOnePair",
    "SymMatrix",
    "build_grid_basis",
    "assemble_overlap",
    "assemble_stiffness",
    "assemble_potential",
    "estimate_form_bound",
    "has_positive_pivots",
    "stiffness_kernel_dim",
]


# ---------------------------------------------------------------------------
# boundary conditions


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary condition on the trace pair (value at 0, value at 1).

    kind is one of 'dirichlet-both', 'dirichlet-left', 'dirichlet-right',
    'free', 'quasiperiodic', 'line'.  'quasiperiodic' constrains
    psi(0) = alpha * psi(1); 'line' constrains the trace pair to
    span{(a, b)}.
    """

    kind: str
    alpha: float = 0.0
    a: float = 0.0
    b: float = 0.0

    _KINDS = (
        "dirichlet-both",
        "dirichlet-left",
        "dirichlet-right",
        "free",
        "quasiperiodic",
        "line",
    )

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "quasiperiodic":
            if not np.isfinite(self.alpha) or self.alpha == 0.0:
                raise ValueError("quasiperiodic alpha must be finite and nonzero")
        if self.kind == "line" and self.a == 0.0 and self.b == 0.0:
            raise ValueError("line boundary direction must be nonzero")

    @staticmethod
    def dirichlet_both() -> "BoundarySpec":
        return BoundarySpec("dirichlet-both")

    @staticmethod
    def dirichlet_left() -> "BoundarySpec":
        return BoundarySpec("dirichlet-left")

    @staticmethod
    def dirichlet_right() -> "BoundarySpec":
        return BoundarySpec("dirichlet-right")

    @staticmethod
    def free() -> "BoundarySpec":
        return BoundarySpec("free")

    @staticmethod
    def quasiperiodic(alpha: float) -> "BoundarySpec":
        return BoundarySpec("quasiperiodic", alpha=float(alpha))

    @staticmethod
    def line(a: float, b: float) -> "BoundarySpec":
        return BoundarySpec("line", a=float(a), b=float(b))

    def trace_direction(self) -> tuple[float, float] | None:
        """Spanning vector of the trace subspace if it is one-dimensional."""
        if self.kind == "quasiperiodic":
            return (self.alpha, 1.0)
        if self.kind == "line":
            return (self.a, self.b)
        return None

    def admits_constants(self) -> bool:
        """True when the constant function lies in the boundary subspace."""
        if self.kind == "free":
            return True
        d = self.trace_direction()
        return d is not None and d[0] == d[1]


@dataclass(frozen=True)
class Dof:
    """One basis function: nodal support, coefficients, and trace pair."""

    nodes: tuple[int, ...]
    coeffs: tuple[float, ...]
    trace: tuple[float, float]


@dataclass(frozen=True)
class GridBasis:
    """P1 basis for a uniform grid on (0,1) restricted by a boundary condition."""

    n_cells: int
    h: float
    bc: BoundarySpec
    dofs: tuple[Dof, ...]
    # dof-to-nodal-value extension matrix, shape (n_dofs, n_cells + 1)
    extension: sp.csr_matrix = field(repr=False, compare=False)

    @property
    def n_dofs(self) -> int:
        return len(self.dofs)

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_nodes)

    def nodal_values(self, dof_coeffs: np.ndarray) -> np.ndarray:
        """Map dof coefficients to nodal values on the full grid."""
        dof_coeffs = np.asarray(dof_coeffs)
        return self.extension.T @ dof_coeffs

    def hat_values_at(self, x: np.ndarray) -> np.ndarray:
        """Full-grid hat function values, shape (len(x), n_nodes)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        c = np.clip(x, 0.0, 1.0) / self.h
        k = np.minimum(c.astype(int), self.n_cells - 1)
        t = c - k
        vals = np.zeros((x.size, self.n_nodes))
        rows = np.arange(x.size)
        vals[rows, k] = 1.0 - t
        vals[rows, k + 1] = t
        return vals


def build_grid_basis(n_cells: int, bc: BoundarySpec) -> GridBasis:
    """Construct the P1 basis for the given boundary condition.

    Requires n_cells >= 4 so that the coupled boundary dof never overlaps
    itself and every interior pattern occurs at least once.
    """
    if n_cells < 4:
        raise ValueError(f"n_cells must be >= 4, got {n_cells}")
    n = n_cells
    interior = [Dof((i,), (1.0,), (0.0, 0.0)) for i in range(1, n)]

    if bc.kind == "dirichlet-both":
        dofs = interior
    elif bc.kind == "dirichlet-left":
        dofs = interior + [Dof((n,), (1.0,), (0.0, 1.0))]
    elif bc.kind == "dirichlet-right":
        dofs = [Dof((0,), (1.0,), (1.0, 0.0))] + interior
    elif bc.kind == "free":
        dofs = [Dof((0,), (1.0,), (1.0, 0.0))] + interior + [Dof((n,), (1.0,), (0.0, 1.0))]
    else:
        a, b = bc.trace_direction()
        dofs = interior + [Dof((0, n), (a, b), (a, b))]

    rows, cols, vals = [], [], []
    for r, dof in enumerate(dofs):
        for node, coeff in zip(dof.nodes, dof.coeffs):
            rows.append(r)
            cols.append(node)
            vals.append(coeff)
    ext = sp.csr_matrix((vals, (rows, cols)), shape=(len(dofs), n + 1))
    return GridBasis(n_cells=n, h=1.0 / n, bc=bc, dofs=tuple(dofs), extension=ext)


# ---------------------------------------------------------------------------
# potentials


class PotentialSpec:
    """Marker base class for external potential descriptions."""


@dataclass(frozen=True)
class Delta(PotentialSpec):
    """Point potential strength * delta(x - x0); endpoints allowed."""

    x0: float
    strength: float

    def __post_init__(self):
        if not 0.0 <= self.x0 <= 1.0:
            raise ValueError(f"delta position must lie in [0,1], got {self.x0}")


@dataclass(frozen=True)
class Sampled(PotentialSpec):
    """Piecewise-linear potential given by its values at the grid nodes."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class HMinusOnePair(PotentialSpec):
    """Dual-space potential v(phi) = alpha*int(phi) + sum_c V_c * int_c(phi').

    V is piecewise constant per cell; the per-cell flux integrals are exact
    for products of P1 functions.
    """

    alpha: float
    V: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "V", tuple(float(v) for v in self.V))


# ---------------------------------------------------------------------------
# symmetric matrices


@dataclass(frozen=True)
class SymMatrix:
    """Exactly symmetric sparse real matrix with a bandwidth hint."""

    data: sp.csr_matrix = field(repr=False)
    dimension: int
    bandwidth: int

    @staticmethod
    def from_sparse(mat) -> "SymMatrix":
        mat = sp.csr_matrix(mat)
        mat.sum_duplicates()
        mat.sort_indices()
        dim = mat.shape[0]
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("matrix must be square")
        if (mat != mat.T).nnz != 0:
            raise ValueError("matrix must be exactly symmetric")
        coo = mat.tocoo()
        bw = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
        return SymMatrix(data=mat, dimension=dim, bandwidth=bw)

    def dense(self) -> np.ndarray:
        return self.data.toarray()

    def quad(self, x: np.ndarray, y: np.ndarray | None = None) -> float:
        """Quadratic/bilinear form x' A y."""
        if y is None:
            y = x
        return float(x @ (self.data @ y))

    def norm1(self) -> float:
        return float(spla.norm(self.data, 1)) if self.data.nnz else 0.0

    def __matmul__(self, other):
        return self.data @ other


def _symmetrize_exact(mat: sp.spmatrix) -> sp.csr_matrix:
    """Mirror the upper triangle so (i,j) and (j,i) are bit-for-bit equal."""
    mat = sp.csr_matrix(mat)
    upper = sp.triu(mat, k=0)
    return (upper + sp.triu(mat, k=1).T).tocsr()


# ---------------------------------------------------------------------------
# full-grid (unconstrained hat) element matrices


def _full_overlap(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n + 1, 2.0 * h / 3.0)
    main[0] = main[-1] = h / 3.0
    off = np.full(n, h / 6.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _full_stiffness(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n + 1, 2.0 / h)
    main[0] = main[-1] = 1.0 / h
    off = np.full(n, -1.0 / h)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _full_sampled(values: np.ndarray, n: int, h: float) -> sp.csr_matrix:
    """Exact integral of (piecewise-linear v) * phi_i * phi_j.

    Per cell with endpoint potential values (vl, vr):
        int v*phiL*phiL = h*(vl/4 + vr/12)
        int v*phiL*phiR = h*(vl + vr)/12
        int v*phiR*phiR = h*(vl/12 + vr/4)
    """
    vl, vr = values[:-1], values[1:]
    diag = np.zeros(n + 1)
    diag[:-1] += h * (vl / 4.0 + vr / 12.0)
    diag[1:] += h * (vl / 12.0 + vr / 4.0)
    off = h * (vl + vr) / 12.0
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def _full_delta(x0: float, strength: float, n: int, h: float) -> sp.csr_matrix:
    c = x0 / h
    k = min(int(np.floor(c)), n - 1)
    t = c - k
    vals = np.zeros(n + 1)
    vals[k] = 1.0 - t
    vals[k + 1] = t
    nz = np.nonzero(vals)[0]
    block = strength * np.outer(vals[nz], vals[nz])
    mat = sp.lil_matrix((n + 1, n + 1))
    mat[np.ix_(nz, nz)] = block
    return mat.tocsr()


def _full_hminusone(alpha: float, V: np.ndarray, n: int, h: float) -> sp.csr_matrix:
    # int_cell (phi_i phi_j)' telescopes to endpoint products, which for hat
    # functions is e_{k+1}e_{k+1}' - e_k e_k' per cell.
    diag = np.zeros(n + 1)
    diag[1:] += V
    diag[:-1] -= V
    return (alpha * _full_overlap(n, h) + sp.diags(diag)).tocsr()


# ---------------------------------------------------------------------------
# assembly in the boundary-restricted basis


def _project(basis: GridBasis, full: sp.spmatrix) -> SymMatrix:
    e = basis.extension
    return SymMatrix.from_sparse(_symmetrize_exact(e @ full @ e.T))


def assemble_overlap(basis: GridBasis) -> SymMatrix:
    """Mass matrix M_ij = int phi_i phi_j; positive definite."""
    return _project(basis, _full_overlap(basis.n_cells, basis.h))


def assemble_stiffness(basis: GridBasis) -> SymMatrix:
    """Stiffness matrix K_ij = int phi_i' phi_j'; positive semi-definite."""
    return _project(basis, _full_stiffness(basis.n_cells, basis.h))


def assemble_potential(basis: GridBasis, v: PotentialSpec) -> SymMatrix:
    """Potential matrix P_ij = v(phi_i phi_j) for any supported potential."""
    n, h = basis.n_cells, basis.h
    if isinstance(v, Delta):
        full = _full_delta(v.x0, v.strength, n, h)
    elif isinstance(v, Sampled):
        values = np.asarray(v.values, dtype=float)
        if values.size != basis.n_nodes:
            raise ValueError(
                f"sampled potential needs {basis.n_nodes} nodal values, got {values.size}"
            )
        full = _full_sampled(values, n, h)
    elif isinstance(v, HMinusOnePair):
        V = np.asarray(v.V, dtype=float)
        if V.size != n:
            raise ValueError(f"per-cell V needs {n} entries, got {V.size}")
        full = _full_hminusone(v.alpha, V, n, h)
    else:
        raise TypeError(f"unsupported potential {type(v).__name__}")
    return _project(basis, full)


def estimate_form_bound(
    basis: GridBasis,
    v: PotentialSpec,
    epsilon: float,
    trials: int = 200,
    seed: int = 0,
) -> float:
    """Sampled relative-bound constant for the potential form.

    Returns the smallest C >= 0 such that |v(|psi|^2)| <= epsilon*|psi|_H1^2
    + C*|psi|_L2^2 holds on `trials` random coefficient vectors.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    K = assemble_stiffness(basis)
    M = assemble_overlap(basis)
    P = assemble_potential(basis, v)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        psi = rng.standard_normal(basis.n_dofs)
        pot = abs(P.quad(psi))
        h1 = K.quad(psi) + M.quad(psi)
        l2 = M.quad(psi)
        best = max(best, (pot - epsilon * h1) / l2)
    return best


# ---------------------------------------------------------------------------
# structure checks


def has_positive_pivots(mat: SymMatrix) -> bool:
    """Symmetric factorization check: all diagonal pivots strictly positive.

    Uses banded Cholesky when the matrix is tridiagonal; otherwise an LU
    with natural ordering (valid because positive definite matrices need no
    pivoting and the coupled boundary dof sits last, keeping fill minimal).
    """
    import scipy.linalg as sla

    a = mat.data
    if mat.bandwidth <= 1:
        ab = np.zeros((2, mat.dimension))
        ab[0, 1:] = a.diagonal(1)
        ab[1, :] = a.diagonal(0)
        try:
            sla.cholesky_banded(ab)
            return True
        except np.linalg.LinAlgError:
            return False
    try:
        lu = spla.splu(a.tocsc(), permc_spec="NATURAL", diag_pivot_thresh=0.0)
    except RuntimeError:
        return False
    if not np.array_equal(lu.perm_r, np.arange(mat.dimension)):
        return False
    return bool(np.all(lu.U.diagonal() > 0.0))


def require_positive_definite(mat: SymMatrix, name: str = "matrix") -> None:
    if not has_positive_pivots(mat):
        raise IndefiniteMatrixError(f"{name} is not positive definite")


def stiffness_kernel_dim(K: SymMatrix, rel_threshold: float = 1e-12) -> int:
    """Count near-zero eigenvalues of K below rel_threshold * ||K||_1."""
    import scipy.linalg as sla

    w = sla.eigvalsh(K.dense())
    return int(np.sum(np.abs(w) <= rel_threshold * K.norm1()))
