import numpy as np
import pytest

from fermigate.basis import BoundarySpec, Delta
from fermigate.errors import ShiftError
from fermigate.manybody import classify_degeneracy, inverse_iteration_ground, solve_mb_eig
from fermigate.slater import (
    DeltaContact,
    ManyBodyOperator,
    NoInteraction,
    WaveVector,
    build_problem,
    enumerate_slater_basis,
)

PI2 = np.pi**2
DIRICHLET = BoundarySpec.dirichlet_both()
PERIODIC = BoundarySpec.quasiperiodic(1.0)
ANTIPERIODIC = BoundarySpec.quasiperiodic(-1.0)


@pytest.fixture(scope="module")
def free_dirichlet_40():
    return build_problem(None, NoInteraction(), DIRICHLET, 40, 2)


class TestSolveMbEig:
    def test_free_dirichlet_ground(self, free_dirichlet_40):
        res = solve_mb_eig(free_dirichlet_40.operator, 2)
        assert res.eigenvalues[0] == pytest.approx(5 * PI2, rel=2e-2)

    def test_free_periodic_degenerate_pair(self):
        prob = build_problem(None, NoInteraction(), PERIODIC, 40, 2)
        res = solve_mb_eig(prob.operator, 3)
        assert res.eigenvalues[0] == pytest.approx(4 * PI2, rel=2e-2)
        assert res.eigenvalues[1] == pytest.approx(res.eigenvalues[0], rel=1e-10)

    def test_free_antiperiodic_simple_ground(self):
        prob = build_problem(None, NoInteraction(), ANTIPERIODIC, 40, 2)
        res = solve_mb_eig(prob.operator, 3)
        assert res.eigenvalues[0] == pytest.approx(2 * PI2, rel=2e-2)
        assert res.eigenvalues[1] == pytest.approx(10 * PI2, rel=2e-2)

    def test_residual_bound(self, free_dirichlet_40):
        res = solve_mb_eig(free_dirichlet_40.operator, 4)
        H = free_dirichlet_40.operator.dense()
        scale = np.max(np.abs(H))
        assert np.all(res.residuals <= 1e-8 * scale)

    def test_euclidean_orthonormal(self, free_dirichlet_40):
        res = solve_mb_eig(free_dirichlet_40.operator, 4)
        G = res.eigenvectors.T @ res.eigenvectors
        assert np.max(np.abs(G - np.eye(4))) <= 1e-10

    def test_k_out_of_range(self, free_dirichlet_40):
        with pytest.raises(ValueError):
            solve_mb_eig(free_dirichlet_40.operator, 0)

    def test_variational_upper_bound(self, free_dirichlet_40):
        H = free_dirichlet_40.operator.dense()
        lam1 = solve_mb_eig(free_dirichlet_40.operator, 1).eigenvalues[0]
        rng = np.random.default_rng(7)
        for _ in range(50):
            x = rng.standard_normal(H.shape[0])
            x /= np.linalg.norm(x)
            assert lam1 <= x @ (H @ x) + 1e-10

    def test_refinement_improves_ground_energy(self):
        exact = 5 * PI2
        errs = []
        for n in (20, 40):
            prob = build_problem(None, NoInteraction(), DIRICHLET, n, 2)
            errs.append(abs(solve_mb_eig(prob.operator, 1).eigenvalues[0] - exact))
        assert errs[1] < errs[0]


class TestClassifyDegeneracy:
    def test_periodic_three_particles_non_degenerate(self):
        rep = classify_degeneracy(None, NoInteraction(), PERIODIC, 3, (12, 24))
        assert rep.verdict == "non-degenerate"
        assert rep.gaps[1] > 4 * rep.discretization_error_estimate
        assert rep.gaps[1] == pytest.approx(12 * PI2, rel=0.15)

    def test_periodic_two_particles_degenerate(self):
        rep = classify_degeneracy(None, NoInteraction(), PERIODIC, 2, (12, 24))
        assert rep.verdict == "degenerate"

    def test_antiperiodic_three_particles_degenerate(self):
        rep = classify_degeneracy(None, NoInteraction(), ANTIPERIODIC, 3, (12, 24))
        assert rep.verdict == "degenerate"

    def test_interacting_well_non_degenerate(self):
        rep = classify_degeneracy(
            Delta(0.5, -10.0), DeltaContact(5.0), DIRICHLET, 2, (12, 24)
        )
        assert rep.verdict == "non-degenerate"

    def test_report_invariants(self):
        rep = classify_degeneracy(None, NoInteraction(), PERIODIC, 3, (12, 24))
        if rep.verdict == "non-degenerate":
            assert rep.gaps[1] > 4 * rep.discretization_error_estimate
        assert rep.discretization_error_estimate == pytest.approx(
            abs(rep.lambda1[0] - rep.lambda1[1])
        )

    def test_bad_grid_pair_rejected(self):
        with pytest.raises(ValueError, match="2n"):
            classify_degeneracy(None, NoInteraction(), PERIODIC, 2, (12, 20))


class TestInverseIteration:
    def test_diagonal_converges_to_first_axis(self):
        H = ManyBodyOperator(np.diag([1.0, 2.0, 3.0]), enumerate_slater_basis(3, 1))
        psi = inverse_iteration_ground(H, 0.0)
        assert abs(psi.coefficients[0]) == pytest.approx(1.0, abs=1e-8)

    def test_matches_direct_solver_ray(self, free_dirichlet_40):
        res = solve_mb_eig(free_dirichlet_40.operator, 1)
        shift = res.eigenvalues[0] - 5.0
        psi = inverse_iteration_ground(free_dirichlet_40.operator, shift)
        overlap = abs(float(psi.coefficients @ res.eigenvectors[:, 0]))
        assert overlap >= 1.0 - 1e-8

    def test_shift_above_ground_rejected(self, free_dirichlet_40):
        res = solve_mb_eig(free_dirichlet_40.operator, 1)
        with pytest.raises(ShiftError):
            inverse_iteration_ground(free_dirichlet_40.operator, res.eigenvalues[0] + 1.0)

    def test_degenerate_case_returns_some_ground_ray(self):
        # periodic pair: any vector in the two-dimensional ground space is
        # admissible, so only the Rayleigh quotient is pinned down
        prob = build_problem(None, NoInteraction(), PERIODIC, 20, 2)
        res = solve_mb_eig(prob.operator, 2)
        psi = inverse_iteration_ground(prob.operator, res.eigenvalues[0] - 5.0)
        H = prob.operator.dense()
        ray = float(psi.coefficients @ (H @ psi.coefficients))
        assert ray == pytest.approx(res.eigenvalues[0], abs=1e-6)
        proj = res.eigenvectors[:, :2].T @ psi.coefficients
        assert np.linalg.norm(proj) == pytest.approx(1.0, abs=1e-6)

    def test_reports_iteration_count_on_stagnation(self):
        from fermigate.errors import ConvergenceError

        H = ManyBodyOperator(np.diag([1.0, 2.0]), enumerate_slater_basis(2, 1))
        with pytest.raises(ConvergenceError) as err:
            inverse_iteration_ground(H, 0.0, tol=1e-16, max_iter=5)
        assert err.value.iterations == 5


class TestWaveVectorFlag:
    def test_unnormalized_allowed_when_flagged(self):
        basis = enumerate_slater_basis(4, 2)
        WaveVector(np.ones(6), basis, normalized=False)
