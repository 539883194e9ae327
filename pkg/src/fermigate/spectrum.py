"""Generalized symmetric eigensolves and spectral gap classification.

Solves (K + P) x = lambda M x for the lowest eigenpairs with M-orthonormal
eigenvectors.  Dense symmetric-definite reduction is used up to a dimension
cap; above it, shift-invert Lanczos with a deterministic start vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import BoundarySpec, SymMatrix, has_positive_pivots
from .errors import ConvergenceError, IndefiniteMatrixError

__all__ = [
    "SpectralResult",
    "GapReport",
    "solve_sp_eig",
    "solve_pencil",
    "solve_dense_symmetric",
    "gap_report",
]

DENSE_DIM_CAP = 5000

# residual and orthonormality tolerances promised by SpectralResult
RESIDUAL_RTOL = 1e-8
ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SpectralResult:
    """Ascending eigenvalues with M-orthonormal eigenvectors and residuals."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # column i is the i-th eigenvector
    residuals: np.ndarray
    k_requested: int

    def check(self, A_norm1: float, M_norm1: float) -> None:
        """Raise if the advertised invariants do not hold."""
        lam = self.eigenvalues
        if np.any(np.diff(lam) < 0):
            raise AssertionError("eigenvalues not non-decreasing")
        bound = RESIDUAL_RTOL * (A_norm1 + np.abs(lam) * M_norm1)
        if np.any(self.residuals > bound):
            raise AssertionError("residual bound violated")


def _residuals(A: sp.spmatrix, M: sp.spmatrix, lam: np.ndarray, X: np.ndarray) -> np.ndarray:
    R = A @ X - (M @ X) * lam[None, :]
    return np.linalg.norm(R, axis=0)


def solve_pencil(A: SymMatrix, M: SymMatrix, k: int) -> SpectralResult:
    """Lowest k eigenpairs of the symmetric-definite pencil (A, M)."""
    dim = A.dimension
    if M.dimension != dim:
        raise ValueError("dimension mismatch between A and M")
    if not 1 <= k <= dim:
        raise ValueError(f"k must lie in [1, {dim}], got {k}")
    if not has_positive_pivots(M):
        raise IndefiniteMatrixError("overlap matrix is not positive definite")

    if dim <= DENSE_DIM_CAP:
        Ad, Md = A.dense(), M.dense()
        if k < dim:
            lam, X = sla.eigh(Ad, Md, subset_by_index=[0, k - 1], driver="gvx")
        else:
            lam, X = sla.eigh(Ad, Md, driver="gvd")
    else:
        # shift below the spectrum via a Gershgorin bound on the pencil
        d = A.data.diagonal() / M.data.diagonal()
        sigma = float(np.min(d)) - abs(float(np.min(d))) - 1.0
        v0 = np.full(dim, 1.0 / np.sqrt(dim))
        try:
            lam, X = spla.eigsh(
                A.data, k=k, M=M.data, sigma=sigma, which="LM", v0=v0, tol=0
            )
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"eigensolver did not converge ({len(exc.eigenvalues)} of {k} pairs)",
                iterations=k,
            ) from exc
        order = np.argsort(lam)
        lam, X = lam[order], X[:, order]

    res = _residuals(A.data, M.data, lam, X)
    return SpectralResult(eigenvalues=lam, eigenvectors=X, residuals=res, k_requested=k)


def solve_sp_eig(K: SymMatrix, P: SymMatrix, M: SymMatrix, k: int) -> SpectralResult:
    """Lowest k eigenpairs of (K + P) x = lambda M x."""
    if not (K.dimension == P.dimension == M.dimension):
        raise ValueError("K, P, M dimensions disagree")
    A = SymMatrix.from_sparse(K.data + P.data)
    return solve_pencil(A, M, k)


def solve_dense_symmetric(H: np.ndarray, k: int, v0_seed: int = 0) -> SpectralResult:
    """Lowest k eigenpairs of a dense/sparse symmetric matrix (M = I)."""
    dim = H.shape[0]
    if not 1 <= k <= dim:
        raise ValueError(f"k must lie in [1, {dim}], got {k}")
    sparse_input = sp.issparse(H)
    if not sparse_input:
        if dim <= 400:
            lam, X = sla.eigh(H)
            lam, X = lam[:k], X[:, :k]
        else:
            lam, X = sla.eigh(H, subset_by_index=[0, k - 1], driver="evr")
    else:
        if k >= dim - 1:
            lam, X = sla.eigh(H.toarray())
            lam, X = lam[:k], X[:, :k]
        else:
            v0 = np.full(dim, 1.0 / np.sqrt(dim))
            try:
                lam, X = spla.eigsh(H, k=k, which="SA", v0=v0, tol=0, maxiter=20000)
            except spla.ArpackNoConvergence as exc:
                raise ConvergenceError(
                    f"eigensolver did not converge ({len(exc.eigenvalues)} of {k} pairs)"
                ) from exc
            order = np.argsort(lam)
            lam, X = lam[order], X[:, order]
    R = H @ X - X * lam[None, :]
    res = np.linalg.norm(R, axis=0)
    return SpectralResult(eigenvalues=lam, eigenvectors=X, residuals=res, k_requested=k)


# ---------------------------------------------------------------------------
# gap laws


@dataclass(frozen=True)
class GapReport:
    """Consecutive-gap verdicts against the boundary-condition gap pattern.

    For a one-dimensional coupling with alpha > 0 the odd pairs
    (lambda_1, lambda_2), (lambda_3, lambda_4), ... must be strict; for
    alpha < 0 the even pairs must be strict; for separable conditions every
    consecutive pair must be strict.  Pairs not required strict may be
    degenerate within tolerance.
    """

    gaps: tuple[float, ...]
    verdicts: tuple[str, ...]
    required_strict: tuple[bool, ...]
    deg_tol: float

    @property
    def ok(self) -> bool:
        return "violation" not in self.verdicts


def _required_strict_pattern(bc: BoundarySpec, n_pairs: int) -> list[bool]:
    d = bc.trace_direction()
    if d is not None:
        alpha = np.inf if d[1] == 0.0 else d[0] / d[1]
        if alpha > 0 and np.isfinite(alpha):
            return [(i % 2 == 1) for i in range(1, n_pairs + 1)]
        if alpha < 0:
            return [(i % 2 == 0) for i in range(1, n_pairs + 1)]
        # alpha in {0, inf}: separable (one endpoint pinned to zero)
        return [True] * n_pairs
    return [True] * n_pairs


def gap_report(result: SpectralResult, bc: BoundarySpec, deg_tol: float = 1e-6) -> GapReport:
    """Classify consecutive eigenvalue gaps as strict/degenerate/violation."""
    lam = result.eigenvalues
    if lam.size < 2:
        raise ValueError("need at least two eigenvalues")
    n_pairs = lam.size - 1
    required = _required_strict_pattern(bc, n_pairs)
    gaps, verdicts = [], []
    for i in range(n_pairs):
        gap = float(lam[i + 1] - lam[i])
        scale = max(1.0, abs(float(lam[i])), abs(float(lam[i + 1])))
        strict = gap > deg_tol * scale
        gaps.append(gap)
        if strict:
            verdicts.append("strict")
        elif required[i]:
            verdicts.append("violation")
        else:
            verdicts.append("degenerate-within-tolerance")
    return GapReport(
        gaps=tuple(gaps),
        verdicts=tuple(verdicts),
        required_strict=tuple(required),
        deg_tol=deg_tol,
    )
