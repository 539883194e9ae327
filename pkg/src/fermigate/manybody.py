"""Many-body eigensolves, degeneracy classification, inverse iteration.

Ground-state degeneracy is never judged from a single grid: the spectral
gap is tracked under one refinement step and the verdict compares the gap
against the measured discretization error, since discretization splits
exact degeneracies (and splits near-degeneracies) at second order in the
mesh size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .basis import BoundarySpec, PotentialSpec
from .errors import ConvergenceError, ShiftError
from .slater import InteractionSpec, ManyBodyOperator, ManyBodyProblem, WaveVector, build_problem
from .spectrum import SpectralResult, solve_dense_symmetric

__all__ = [
    "DegeneracyReport",
    "solve_mb_eig",
    "classify_degeneracy",
    "inverse_iteration_ground",
]

# gaps below this (relative) floor are treated as exactly degenerate
GAP_FLOOR_RTOL = 1e-9


def solve_mb_eig(H: ManyBodyOperator, k: int) -> SpectralResult:
    """Lowest k eigenpairs of the many-body operator (Euclidean-orthonormal)."""
    if not 1 <= k <= H.dim:
        raise ValueError(f"k must lie in [1, {H.dim}], got {k}")
    return solve_dense_symmetric(H.matrix, k)


@dataclass(frozen=True)
class DegeneracyReport:
    """Two-grid evidence for a ground-state degeneracy verdict.

    verdict 'non-degenerate' requires the fine-grid gap to exceed four
    times the discretization error estimate |lambda1(h) - lambda1(h/2)|;
    'degenerate' requires the gap to shrink at least by half (or sit at
    the solver floor on both grids); anything else is 'inconclusive'.
    """

    grids: tuple[int, int]
    lambda1: tuple[float, float]
    lambda2: tuple[float, float]
    gaps: tuple[float, float]
    refinement_ratio: float
    discretization_error_estimate: float
    verdict: str


def classify_degeneracy(
    v: PotentialSpec | None,
    w: InteractionSpec,
    bc: BoundarySpec,
    n_particles: int,
    grids: tuple[int, int],
    problems: tuple[ManyBodyProblem, ManyBodyProblem] | None = None,
) -> DegeneracyReport:
    """Solve on a coarse/fine grid pair and classify the ground-state gap."""
    n_coarse, n_fine = grids
    if n_fine != 2 * n_coarse:
        raise ValueError("grids must be (n, 2n)")
    lam1, lam2 = [], []
    for n_cells, prob in zip(grids, problems or (None, None)):
        if prob is None:
            prob = build_problem(v, w, bc, n_cells, n_particles)
        res = solve_mb_eig(prob.operator, 2)
        lam1.append(float(res.eigenvalues[0]))
        lam2.append(float(res.eigenvalues[1]))
    gaps = (lam2[0] - lam1[0], lam2[1] - lam1[1])
    err = abs(lam1[0] - lam1[1])
    floor = GAP_FLOOR_RTOL * max(1.0, abs(lam1[1]))
    ratio = gaps[1] / gaps[0] if gaps[0] > floor else 0.0

    if gaps[1] > 4.0 * err and gaps[1] > floor:
        verdict = "non-degenerate"
    elif gaps[1] <= max(floor, 0.5 * gaps[0]):
        verdict = "degenerate"
    else:
        verdict = "inconclusive"
    return DegeneracyReport(
        grids=grids,
        lambda1=(lam1[0], lam1[1]),
        lambda2=(lam2[0], lam2[1]),
        gaps=gaps,
        refinement_ratio=ratio,
        discretization_error_estimate=err,
        verdict=verdict,
    )


def inverse_iteration_ground(
    H: ManyBodyOperator,
    shift: float,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> WaveVector:
    """Ground-state vector by inverse iteration with a fixed shift.

    The shift must lie strictly below the lowest eigenvalue; this is
    detected through the Cholesky factorization of H - shift*I, which
    fails exactly when the shifted operator is not positive definite.
    """
    Hd = H.dense()
    dim = Hd.shape[0]
    try:
        chol = sla.cho_factor(Hd - shift * np.eye(dim))
    except np.linalg.LinAlgError as exc:
        raise ShiftError(
            f"shift {shift} is not below the lowest eigenvalue (indefinite factorization)"
        ) from exc
    x = np.full(dim, 1.0 / np.sqrt(dim))
    rayleigh = x @ (Hd @ x)
    for it in range(1, max_iter + 1):
        y = sla.cho_solve(chol, x)
        y /= np.linalg.norm(y)
        new_rayleigh = y @ (Hd @ y)
        drift = abs(new_rayleigh - rayleigh)
        align = abs(float(x @ y))
        x, rayleigh = y, new_rayleigh
        if drift <= tol * max(1.0, abs(rayleigh)) and 1.0 - align <= tol:
            return WaveVector(x, H.basis)
    raise ConvergenceError(
        f"inverse iteration stagnated after {max_iter} iterations", iterations=max_iter
    )
