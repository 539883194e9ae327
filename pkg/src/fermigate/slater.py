"""Antisymmetric Galerkin sector built from Slater determinants.

Orbitals are the M-orthonormalized finite-element degrees of freedom; the
N-particle basis is the set of strictly increasing orbital tuples.  The
Hamiltonian over that basis is assembled from one- and two-body integrals
with the usual determinant excitation rules (entries vanish beyond double
excitations), and an independent dense tensor-grid assembly is provided as
an oracle for N = 2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import (
    BoundarySpec,
    GridBasis,
    PotentialSpec,
    SymMatrix,
    assemble_overlap,
    assemble_potential,
    assemble_stiffness,
    build_grid_basis,
    _symmetrize_exact,
)
from .errors import CapExceededError, IndefiniteMatrixError

__all__ = [
    "SlaterBasis",
    "InteractionSpec",
    "NoInteraction",
    "DeltaContact",
    "SampledKernel",
    "TwoBodyTensor",
    "OrbitalSet",
    "ManyBodyOperator",
    "WaveVector",
    "ManyBodyProblem",
    "enumerate_slater_basis",
    "orthonormalize_orbitals",
    "transform_one_body",
    "transform_two_body",
    "assemble_manybody",
    "assemble_manybody_bruteforce",
    "reduced_density",
    "reduced_pair_density",
    "one_body_density_matrix",
    "pair_density_matrix",
    "build_problem",
]

DETERMINANT_CAP = 100_000
DENSE_DIM_CAP = 6000

# moments int_0^1 l0^(4-k) l1^k dt for quartic cell products, k = 0..4
_QUARTIC = np.array([1 / 5, 1 / 20, 1 / 30, 1 / 20, 1 / 5])
# Hankel layout over quadratic-coefficient index pairs (m, n) -> moment m+n
_QUAD_GRAM = np.array(
    [[_QUARTIC[0], _QUARTIC[1], _QUARTIC[2]],
     [_QUARTIC[1], _QUARTIC[2], _QUARTIC[3]],
     [_QUARTIC[2], _QUARTIC[3], _QUARTIC[4]]]
)
# moments int_0^1 l0^(3-k) l1^k dt for cubic cell products, k = 0..3
_CUBIC = np.array([1 / 4, 1 / 12, 1 / 12, 1 / 4])


# ---------------------------------------------------------------------------
# basis enumeration


@dataclass(frozen=True)
class SlaterBasis:
    """All strictly increasing orbital index tuples in lexicographic order."""

    n_orbitals: int
    n_particles: int
    tuples: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.tuples)

    def index(self) -> dict[tuple[int, ...], int]:
        return {t: i for i, t in enumerate(self.tuples)}


def enumerate_slater_basis(
    n_orbitals: int, n_particles: int, cap: int = DETERMINANT_CAP
) -> SlaterBasis:
    if not 1 <= n_particles <= n_orbitals:
        raise ValueError(
            f"need 1 <= n_particles <= n_orbitals, got ({n_orbitals}, {n_particles})"
        )
    count = comb(n_orbitals, n_particles)
    if count > cap:
        raise CapExceededError(f"{count} determinants exceed cap {cap}")
    tuples = tuple(itertools.combinations(range(n_orbitals), n_particles))
    return SlaterBasis(n_orbitals=n_orbitals, n_particles=n_particles, tuples=tuples)


# ---------------------------------------------------------------------------
# orbitals


@dataclass(frozen=True)
class OrbitalSet:
    """Orthonormal orbitals over a grid basis.

    transform R satisfies R' M R = I; column a of `nodal` holds the values
    of orbital a at the grid nodes.
    """

    grid: GridBasis
    transform: np.ndarray = field(repr=False)
    nodal: np.ndarray = field(repr=False)

    @property
    def n_orbitals(self) -> int:
        return self.transform.shape[1]


def orthonormalize_orbitals(M: SymMatrix) -> np.ndarray:
    """Triangular transform R with R' M R = identity (deterministic)."""
    try:
        L = sla.cholesky(M.dense(), lower=True)
    except np.linalg.LinAlgError as exc:
        raise IndefiniteMatrixError("overlap matrix is not positive definite") from exc
    return sla.solve_triangular(L, np.eye(M.dimension), lower=True, trans="T")


def make_orbitals(basis: GridBasis, M: SymMatrix) -> OrbitalSet:
    R = orthonormalize_orbitals(M)
    nodal = basis.extension.T @ R
    return OrbitalSet(grid=basis, transform=R, nodal=np.asarray(nodal))


def transform_one_body(A: SymMatrix, R: np.ndarray) -> SymMatrix:
    """One-body matrix in the orthonormal orbital basis: R' A R."""
    if A.dimension != R.shape[0]:
        raise ValueError("transform shape does not match matrix dimension")
    dense = R.T @ (A.data @ R)
    return SymMatrix.from_sparse(_symmetrize_exact(sp.csr_matrix(dense)))


# ---------------------------------------------------------------------------
# interactions


class InteractionSpec:
    """Marker base class for two-body interaction descriptions."""


@dataclass(frozen=True)
class NoInteraction(InteractionSpec):
    pass


@dataclass(frozen=True)
class DeltaContact(InteractionSpec):
    """Contact interaction g * delta(x - y)."""

    g: float


@dataclass(frozen=True)
class SampledKernel(InteractionSpec):
    """Symmetric kernel w(x, y) given by its values on the node grid."""

    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        vals = tuple(tuple(float(x) for x in row) for row in self.values)
        object.__setattr__(self, "values", vals)
        arr = np.asarray(vals)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("kernel samples must form a square array")
        if np.max(np.abs(arr - arr.T)) > 1e-14:
            raise ValueError("kernel samples must be symmetric to 1e-14")


@dataclass(frozen=True)
class TwoBodyTensor:
    """Two-body integrals over orthonormal orbitals.

    pair_matrix is (n^2, n^2) with element [(a, c), (b, d)] equal to
    int int phi_a(x) phi_c(x) w(x, y) phi_b(y) phi_d(y) dx dy, i.e. the
    physicist integral <ab|w|cd> gathered by same-coordinate pairs.
    None marks the identically zero interaction.
    """

    n_orbitals: int
    pair_matrix: np.ndarray | None = field(repr=False, default=None)

    @property
    def is_null(self) -> bool:
        return self.pair_matrix is None

    def elem(self, a: int, b: int, c: int, d: int) -> float:
        """<ab|w|cd>."""
        if self.pair_matrix is None:
            return 0.0
        n = self.n_orbitals
        return float(self.pair_matrix[a * n + c, b * n + d])


def _pair_cell_coeffs(nodal: np.ndarray) -> np.ndarray:
    """Per-cell quadratic coefficients of all orbital pair products.

    Returns (n_orb^2, n_cells, 3): pair (a, b) restricted to a cell equals
    q0*l0^2 + q1*l0*l1 + q2*l1^2 in the local linear shape functions.
    """
    n_nodes, n_orb = nodal.shape
    n_cells = n_nodes - 1
    u = nodal[:-1, :]  # left values per cell, (n_cells, n_orb)
    v = nodal[1:, :]
    q0 = np.einsum("ca,cb->abc", u, u)
    q1 = np.einsum("ca,cb->abc", u, v) + np.einsum("ca,cb->abc", v, u)
    q2 = np.einsum("ca,cb->abc", v, v)
    out = np.empty((n_orb * n_orb, n_cells, 3))
    out[:, :, 0] = q0.reshape(n_orb * n_orb, n_cells)
    out[:, :, 1] = q1.reshape(n_orb * n_orb, n_cells)
    out[:, :, 2] = q2.reshape(n_orb * n_orb, n_cells)
    return out


def _contact_pair_matrix(g: float, orbitals: OrbitalSet) -> np.ndarray:
    """Closed-form g * int phi_a phi_b phi_c phi_d (piecewise quartic)."""
    grid = orbitals.grid
    coeffs = _pair_cell_coeffs(orbitals.nodal)  # (n^2, n_cells, 3)
    n2, n_cells, _ = coeffs.shape
    weighted = coeffs @ _QUAD_GRAM  # contract the quadratic Gram per cell
    flat = coeffs.reshape(n2, 3 * n_cells)
    wflat = weighted.reshape(n2, 3 * n_cells)
    return (g * grid.h) * (wflat @ flat.T)


def _gauss_cells(grid: GridBasis, order: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points/weights on every cell, mapped to (0,1)."""
    x, w = np.polynomial.legendre.leggauss(order)
    t = (x + 1.0) / 2.0
    wt = w / 2.0
    starts = np.arange(grid.n_cells) * grid.h
    pts = (starts[:, None] + t[None, :] * grid.h).ravel()
    wts = np.tile(wt * grid.h, grid.n_cells)
    return pts, wts


def _kernel_pair_matrix(spec: SampledKernel, orbitals: OrbitalSet) -> np.ndarray:
    grid = orbitals.grid
    wnod = np.asarray(spec.values)
    if wnod.shape[0] != grid.n_nodes:
        raise ValueError(
            f"kernel needs {grid.n_nodes}x{grid.n_nodes} nodal samples, got {wnod.shape}"
        )
    pts, wts = _gauss_cells(grid, order=4)
    hats = grid.hat_values_at(pts)  # (Q, n_nodes)
    V = hats @ orbitals.nodal  # orbital values at quadrature points
    G = hats @ wnod @ hats.T  # bilinear kernel at point pairs
    n_orb = V.shape[1]
    B = (V[:, :, None] * V[:, None, :]).reshape(len(pts), n_orb * n_orb)
    Bw = B * wts[:, None]
    return Bw.T @ G @ Bw


def transform_two_body(
    w: InteractionSpec, basis: GridBasis, R: np.ndarray
) -> TwoBodyTensor:
    """Two-body tensor in the orthonormal orbitals defined by R."""
    if R.shape[0] != basis.n_dofs:
        raise ValueError("transform rows must match the basis dof count")
    n_orb = R.shape[1]
    if isinstance(w, NoInteraction):
        return TwoBodyTensor(n_orbitals=n_orb, pair_matrix=None)
    orbitals = OrbitalSet(grid=basis, transform=R, nodal=np.asarray(basis.extension.T @ R))
    if isinstance(w, DeltaContact):
        if w.g == 0.0:
            return TwoBodyTensor(n_orbitals=n_orb, pair_matrix=None)
        return TwoBodyTensor(n_orbitals=n_orb, pair_matrix=_contact_pair_matrix(w.g, orbitals))
    if isinstance(w, SampledKernel):
        return TwoBodyTensor(n_orbitals=n_orb, pair_matrix=_kernel_pair_matrix(w, orbitals))
    raise TypeError(f"unsupported interaction {type(w).__name__}")


# ---------------------------------------------------------------------------
# many-body operator


@dataclass(frozen=True)
class ManyBodyOperator:
    """Hamiltonian over a Slater basis of orthonormal orbitals (overlap = I)."""

    matrix: object = field(repr=False)  # dense ndarray or scipy CSR
    basis: SlaterBasis
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else self.matrix


@dataclass(frozen=True)
class WaveVector:
    """Coefficients over a Slater basis, Euclidean norm 1 when normalized."""

    coefficients: np.ndarray = field(repr=False)
    basis: SlaterBasis
    normalized: bool = True

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        if c.shape != (self.basis.dim,):
            raise ValueError("coefficient length does not match basis size")
        if self.normalized and abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise ValueError("coefficients flagged normalized but norm != 1")
        object.__setattr__(self, "coefficients", c)


def _single_sign(tup: tuple[int, ...], pos_removed: int, new_tuple: tuple[int, ...], new_orb: int) -> int:
    pos_inserted = new_tuple.index(new_orb)
    return -1 if (pos_removed + pos_inserted) % 2 else 1


def _assemble_n2(h: np.ndarray, two: TwoBodyTensor | None, basis: SlaterBasis) -> np.ndarray:
    """Vectorized assembly for two particles (every pair differs by <= 2)."""
    n = basis.n_orbitals
    dets = np.asarray(basis.tuples, dtype=np.int64)
    p, q = dets[:, 0], dets[:, 1]
    D = len(dets)

    pi, qi = p[:, None], q[:, None]
    pj, qj = p[None, :], q[None, :]
    pp, qq, pq, qp = pi == pj, qi == qj, pi == qj, qi == pj

    H = np.zeros((D, D))
    if two is not None and not two.is_null:
        T = two.pair_matrix.ravel()
        n2 = n * n
        # double-excitation formula, valid wherever no orbital is shared
        r = (pi * n + pj) * n2 + (qi * n + qj)
        H = 2.0 * T[r]
        r = (pi * n + qj) * n2 + (qi * n + pj)
        H -= 2.0 * T[r]
        del r

    # shared-one-orbital entries overwrite the doubles formula
    share_i_p = pp | pq
    share_j_p = pp | qp
    ones = (share_i_p.astype(np.int8) + (qp | qq)) == 1
    ii, jj = np.nonzero(ones)
    di = np.where(share_i_p[ii, jj], q[ii], p[ii])
    dj = np.where(share_j_p[ii, jj], q[jj], p[jj])
    s_orb = np.where(share_i_p[ii, jj], p[ii], q[ii])
    sign = np.where(
        (share_i_p[ii, jj].astype(np.int8) + share_j_p[ii, jj]) % 2 == 0, 1.0, -1.0
    )
    elem = h[di, dj].copy()
    if two is not None and not two.is_null:
        T2 = two.pair_matrix
        elem += 2.0 * (T2[di * n + dj, s_orb * n + s_orb] - T2[di * n + s_orb, s_orb * n + dj])
    H[ii, jj] = sign * elem

    diag = h[p, p] + h[q, q]
    if two is not None and not two.is_null:
        T2 = two.pair_matrix
        diag = diag + 2.0 * (T2[p * n + p, q * n + q] - T2[p * n + q, q * n + p])
    H[np.arange(D), np.arange(D)] = diag
    return H


def _assemble_generic(
    h: np.ndarray, two: TwoBodyTensor | None, basis: SlaterBasis
) -> np.ndarray | sp.csr_matrix:
    """Excitation-generation assembly for any particle count."""
    dets = basis.tuples
    D = len(dets)
    idx = basis.index()
    has_two = two is not None and not two.is_null
    T = two.pair_matrix if has_two else None
    n = basis.n_orbitals
    dense = D <= DENSE_DIM_CAP
    if not dense and has_two:
        raise CapExceededError(
            f"interacting assembly above dense cap {DENSE_DIM_CAP} is not supported"
        )
    H = np.zeros((D, D)) if dense else None
    rows, cols, vals = [], [], []

    def put(i, j, val):
        if dense:
            H[i, j] += val
        else:
            rows.append(i)
            cols.append(j)
            vals.append(val)

    all_orbs = set(range(n))
    for i, J in enumerate(dets):
        occ = set(J)
        diag = float(sum(h[k, k] for k in J))
        if has_two:
            for a in range(len(J)):
                for b in range(a + 1, len(J)):
                    k, l = J[a], J[b]
                    diag += 2.0 * (T[k * n + k, l * n + l] - T[k * n + l, l * n + k])
        put(i, i, diag)

        virt = sorted(all_orbs - occ)
        for pos_k, k in enumerate(J):
            rest = J[:pos_k] + J[pos_k + 1:]
            for pnew in virt:
                J2 = tuple(sorted(rest + (pnew,)))
                j = idx[J2]
                sign = _single_sign(J, pos_k, J2, pnew)
                val = h[k, pnew]
                if has_two:
                    for m in rest:
                        val += 2.0 * (T[k * n + pnew, m * n + m] - T[k * n + m, m * n + pnew])
                put(i, j, sign * val)

        if has_two:
            for (ak, al) in itertools.combinations(range(len(J)), 2):
                k, l = J[ak], J[al]
                rest = tuple(o for o in J if o not in (k, l))
                for (pnew, qnew) in itertools.combinations(virt, 2):
                    J2 = tuple(sorted(rest + (pnew, qnew)))
                    j = idx[J2]
                    pos_p = J2.index(pnew)
                    pos_q = J2.index(qnew)
                    sign = -1 if (ak + al + pos_p + pos_q) % 2 else 1
                    val = 2.0 * (T[k * n + pnew, l * n + qnew] - T[k * n + qnew, l * n + pnew])
                    put(i, j, sign * val)

    if dense:
        return H
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(D, D)).tocsr()
    mat.sum_duplicates()
    return mat


def assemble_manybody(
    one_body: SymMatrix, two_body: TwoBodyTensor | None, basis: SlaterBasis
) -> ManyBodyOperator:
    """Hamiltonian matrix over the Slater basis via excitation rules."""
    n = basis.n_orbitals
    if one_body.dimension != n:
        raise ValueError("one-body dimension does not match orbital count")
    if two_body is not None and not two_body.is_null and two_body.n_orbitals != n:
        raise ValueError("two-body tensor orbital count mismatch")
    h = one_body.dense()
    if basis.n_particles == 2 and basis.dim <= DENSE_DIM_CAP:
        H = _assemble_n2(h, two_body, basis)
    else:
        H = _assemble_generic(h, two_body, basis)
    if not sp.issparse(H):
        # write each unordered pair once
        H = np.triu(H) + np.triu(H, 1).T
    return ManyBodyOperator(matrix=H, basis=basis, metadata={})


# ---------------------------------------------------------------------------
# brute-force oracle (N = 2)


def _bilinear_at(corners: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    c00, c01, c10, c11 = corners
    return (
        c00 * (1 - s) * (1 - t)
        + c01 * (1 - s) * t
        + c10 * s * (1 - t)
        + c11 * s * t
    )


def assemble_manybody_bruteforce(
    v: PotentialSpec | None,
    w: InteractionSpec,
    basis: GridBasis,
    n_particles: int = 2,
) -> ManyBodyOperator:
    """Direct two-particle assembly on the tensor grid.

    Builds antisymmetrized orbital products as nodal arrays and evaluates
    kinetic, potential, and interaction terms with explicit 2D quadrature.
    Independent of the excitation-rule path; used as its oracle.
    """
    if n_particles != 2:
        raise ValueError("brute-force assembly is implemented for two particles only")
    M = assemble_overlap(basis)
    K = assemble_stiffness(basis)
    orbitals = make_orbitals(basis, M)
    n_orb = orbitals.n_orbitals
    if n_orb > 12:
        raise CapExceededError("brute-force oracle capped at 12 orbitals")

    from .basis import _full_overlap, _full_stiffness  # full-grid hat matrices

    n, h = basis.n_cells, basis.h
    Mf = _full_overlap(n, h).toarray()
    Kf = _full_stiffness(n, h).toarray()
    if v is not None:
        Pf = assemble_potential(build_grid_basis(n, BoundarySpec.free()), v).dense()
    else:
        Pf = np.zeros_like(Mf)

    slater = enumerate_slater_basis(n_orb, 2)
    U = orbitals.nodal
    states = [
        (np.outer(U[:, a], U[:, b]) - np.outer(U[:, b], U[:, a])) / np.sqrt(2.0)
        for (a, b) in slater.tuples
    ]

    gl_t, gl_w = np.polynomial.legendre.leggauss(5)
    gl_t = (gl_t + 1.0) / 2.0
    gl_w = gl_w / 2.0

    def contact_term(CI, CJ, g):
        total = 0.0
        for k in range(n):
            cor_i = np.array([CI[k, k], CI[k, k + 1], CI[k + 1, k], CI[k + 1, k + 1]])
            cor_j = np.array([CJ[k, k], CJ[k, k + 1], CJ[k + 1, k], CJ[k + 1, k + 1]])
            fi = _bilinear_at(cor_i, gl_t, gl_t)
            fj = _bilinear_at(cor_j, gl_t, gl_t)
            total += h * np.sum(gl_w * fi * fj)
        return 2.0 * g * total

    def kernel_term(CI, CJ, wnod):
        gx, gw = np.polynomial.legendre.leggauss(4)
        gx = (gx + 1.0) / 2.0
        gw = gw / 2.0
        total = 0.0
        ss, tt = np.meshgrid(gx, gx, indexing="ij")
        wgt = np.outer(gw, gw)
        for kx in range(n):
            for ky in range(n):
                cor_i = np.array([CI[kx, ky], CI[kx, ky + 1], CI[kx + 1, ky], CI[kx + 1, ky + 1]])
                cor_j = np.array([CJ[kx, ky], CJ[kx, ky + 1], CJ[kx + 1, ky], CJ[kx + 1, ky + 1]])
                cor_w = np.array(
                    [wnod[kx, ky], wnod[kx, ky + 1], wnod[kx + 1, ky], wnod[kx + 1, ky + 1]]
                )
                fi = _bilinear_at(cor_i, ss, tt)
                fj = _bilinear_at(cor_j, ss, tt)
                fw = _bilinear_at(cor_w, ss, tt)
                total += h * h * np.sum(wgt * fi * fj * fw)
        return 2.0 * total

    D = slater.dim
    H = np.zeros((D, D))
    for i in range(D):
        CI = states[i]
        for j in range(i, D):
            CJ = states[j]
            val = np.sum(CI * (Kf @ CJ @ Mf)) + np.sum(CI * (Mf @ CJ @ Kf))
            val += np.sum(CI * (Pf @ CJ @ Mf)) + np.sum(CI * (Mf @ CJ @ Pf))
            if isinstance(w, DeltaContact) and w.g != 0.0:
                val += contact_term(CI, CJ, w.g)
            elif isinstance(w, SampledKernel):
                val += kernel_term(CI, CJ, np.asarray(w.values))
            H[i, j] = val
            H[j, i] = val
    meta = {"v": v, "w": w, "bc": basis.bc, "n_cells": basis.n_cells, "n_particles": 2}
    return ManyBodyOperator(matrix=H, basis=slater, metadata=meta)


# ---------------------------------------------------------------------------
# reduced densities


def one_body_density_matrix(psi: WaveVector) -> np.ndarray:
    """One-particle reduced density matrix over orthonormal orbitals."""
    basis = psi.basis
    c = psi.coefficients
    n = basis.n_orbitals
    idx = basis.index()
    gamma = np.zeros((n, n))
    all_orbs = set(range(n))
    for i, J in enumerate(basis.tuples):
        ci = c[i]
        if ci == 0.0:
            continue
        for k in J:
            gamma[k, k] += ci * ci
        occ = set(J)
        virt = all_orbs - occ
        for pos_k, k in enumerate(J):
            rest = J[:pos_k] + J[pos_k + 1:]
            for pnew in virt:
                J2 = tuple(sorted(rest + (pnew,)))
                j = idx[J2]
                if c[j] == 0.0:
                    continue
                sign = _single_sign(J, pos_k, J2, pnew)
                gamma[k, pnew] += sign * ci * c[j]
    return gamma


def pair_density_matrix(psi: WaveVector) -> np.ndarray:
    """Pair-space density matrix G with rho2(x, y) = b(x)' G b(y).

    Here b(x)[(p, r)] = phi_p(x) phi_r(x); built from determinant pairs
    differing in at most two orbitals.
    """
    basis = psi.basis
    if basis.n_particles < 2:
        raise ValueError("pair density requires at least two particles")
    c = psi.coefficients
    n = basis.n_orbitals
    idx = basis.index()
    G = np.zeros((n * n, n * n))

    def add(p, r, q, s, val):
        G[p * n + r, q * n + s] += val

    all_orbs = set(range(n))
    for i, J in enumerate(basis.tuples):
        ci = c[i]
        if ci == 0.0:
            continue
        # same determinant
        for k in J:
            for l in J:
                if k == l:
                    continue
                add(k, k, l, l, ci * ci)
                add(k, l, l, k, -ci * ci)
        occ = set(J)
        virt = sorted(all_orbs - occ)
        # single excitations
        for pos_k, k in enumerate(J):
            rest = J[:pos_k] + J[pos_k + 1:]
            for pnew in virt:
                J2 = tuple(sorted(rest + (pnew,)))
                cj = c[idx[J2]]
                if cj == 0.0:
                    continue
                sval = _single_sign(J, pos_k, J2, pnew) * ci * cj
                for m in rest:
                    add(k, pnew, m, m, sval)
                    add(m, m, k, pnew, sval)
                    add(k, m, m, pnew, -sval)
                    add(m, pnew, k, m, -sval)
        # double excitations
        for (ak, al) in itertools.combinations(range(len(J)), 2):
            k, l = J[ak], J[al]
            rest = tuple(o for o in J if o not in (k, l))
            for (pnew, qnew) in itertools.combinations(virt, 2):
                J2 = tuple(sorted(rest + (pnew, qnew)))
                cj = c[idx[J2]]
                if cj == 0.0:
                    continue
                pos_p = J2.index(pnew)
                pos_q = J2.index(qnew)
                sign = -1 if (ak + al + pos_p + pos_q) % 2 else 1
                sval = sign * ci * cj
                add(k, pnew, l, qnew, sval)
                add(l, qnew, k, pnew, sval)
                add(k, qnew, l, pnew, -sval)
                add(l, pnew, k, qnew, -sval)
    return G


def _trapezoid_weights(grid: GridBasis) -> np.ndarray:
    w = np.full(grid.n_nodes, grid.h)
    w[0] = w[-1] = grid.h / 2.0
    return w


def reduced_density(psi: WaveVector, orbitals: OrbitalSet) -> np.ndarray:
    """Single-particle density at the grid nodes.

    Nodal values are local mass averages of the piecewise-quadratic orbital
    density, so the trapezoid rule integrates them to exactly the particle
    count.
    """
    gamma = one_body_density_matrix(psi)
    U = orbitals.nodal
    A = U @ gamma @ U.T  # nodal density matrix
    grid = orbitals.grid
    h = grid.h
    d = np.diag(A)
    r0, r2 = d[:-1], d[1:]
    r1 = 2.0 * np.diag(A, 1)
    moments = np.zeros(grid.n_nodes)
    moments[:-1] += h * (r0 * _CUBIC[0] + r1 * _CUBIC[1] + r2 * _CUBIC[2])
    moments[1:] += h * (r0 * _CUBIC[2] + r1 * _CUBIC[1] + r2 * _CUBIC[0])
    return moments / _trapezoid_weights(grid)


def reduced_pair_density(psi: WaveVector, orbitals: OrbitalSet) -> np.ndarray:
    """Pair density on the node grid, symmetric, trapezoid-exact to N(N-1)."""
    G = pair_density_matrix(psi)
    grid = orbitals.grid
    coeffs = _pair_cell_coeffs(orbitals.nodal)  # (n^2, n_cells, 3)
    n2, n_cells, _ = coeffs.shape
    # third moments against the hat at each node
    C3 = np.zeros((grid.n_nodes, n2))
    left = grid.h * (coeffs[:, :, 0] * _CUBIC[0] + coeffs[:, :, 1] * _CUBIC[1] + coeffs[:, :, 2] * _CUBIC[2])
    right = grid.h * (coeffs[:, :, 0] * _CUBIC[2] + coeffs[:, :, 1] * _CUBIC[1] + coeffs[:, :, 2] * _CUBIC[0])
    for k in range(n_cells):
        C3[k, :] += left[:, k]
        C3[k + 1, :] += right[:, k]
    w = _trapezoid_weights(grid)
    rho2 = (C3 @ G @ C3.T) / np.outer(w, w)
    return 0.5 * (rho2 + rho2.T)


# ---------------------------------------------------------------------------
# problem wiring


@dataclass(frozen=True)
class ManyBodyProblem:
    """Assembled many-body problem: grid, matrices, orbitals, Hamiltonian."""

    grid: GridBasis
    overlap: SymMatrix
    stiffness: SymMatrix
    potential: SymMatrix
    orbitals: OrbitalSet
    one_body: SymMatrix
    two_body: TwoBodyTensor
    slater: SlaterBasis
    operator: ManyBodyOperator
    v: PotentialSpec | None
    w: InteractionSpec
    n_particles: int


def build_problem(
    v: PotentialSpec | None,
    w: InteractionSpec,
    bc: BoundarySpec,
    n_cells: int,
    n_particles: int,
    det_cap: int = DETERMINANT_CAP,
) -> ManyBodyProblem:
    """Assemble the full pipeline from problem data to the Hamiltonian."""
    grid = build_grid_basis(n_cells, bc)
    M = assemble_overlap(grid)
    K = assemble_stiffness(grid)
    if v is not None:
        P = assemble_potential(grid, v)
    else:
        P = SymMatrix.from_sparse(sp.csr_matrix((grid.n_dofs, grid.n_dofs)))
    orbitals = make_orbitals(grid, M)
    A = SymMatrix.from_sparse(K.data + P.data)
    one_body = transform_one_body(A, orbitals.transform)
    two_body = transform_two_body(w, grid, orbitals.transform)
    slater = enumerate_slater_basis(grid.n_dofs, n_particles, cap=det_cap)
    op = assemble_manybody(one_body, two_body, slater)
    meta = {"v": v, "w": w, "bc": bc, "n_cells": n_cells, "n_particles": n_particles}
    op = ManyBodyOperator(matrix=op.matrix, basis=slater, metadata=meta)
    return ManyBodyProblem(
        grid=grid,
        overlap=M,
        stiffness=K,
        potential=P,
        orbitals=orbitals,
        one_body=one_body,
        two_body=two_body,
        slater=slater,
        operator=op,
        v=v,
        w=w,
        n_particles=n_particles,
    )
