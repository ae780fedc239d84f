"""
Tests for the projected linear theory and the nonlinear solve.

Validates:
- Approximate kernels Z_i and the Gram matrix
- Projection Q and the weighted norms
- The bordered linear solve
- The Newton loop on q against a synthetic multiplier map
- Fixed point, ball bound and q adjustment on a resolved grid (slow)
"""

import math

import numpy as np
import pytest

from bubbling import reduction
from bubbling.errors import ConfigError, NonZeroMean, OutsideBall, QAdjustDiverged
from bubbling.reduction import (
    ContractionResult,
    ReducedState,
    adjust_q,
    apply_L,
    ball_radius,
    build_frame,
    contraction_solve,
    cutoff_energy,
    cutoff_profile,
    kernel_mass_diagnostics,
    nonlinear_map_defect,
    norm_X,
    norm_X_terms,
    norm_Y,
    project_Q,
    relative_residual,
    residual_g,
    solve_at,
    solve_reduced,
)

from conftest import smooth_meanzero


@pytest.fixture(scope="module")
def smooth_g(fast_frame):
    return project_Q(smooth_meanzero(fast_frame.n, seed=5), fast_frame)[0]


@pytest.fixture(scope="module")
def reduced(smooth_g, fast_frame):
    return solve_reduced(smooth_g, fast_frame)


class TestCutoff:
    """Test suite for χ̄ and its energy."""

    def test_profile_plateaus(self):
        s = np.array([0.0, 2.0, 4.9, 5.0, 7.5, 10.0, 12.0])
        chi, dchi, _ = cutoff_profile(s, 10.0)
        assert np.array_equal(chi[:4], np.ones(4))
        assert chi[5] == 0.0 and chi[6] == 0.0
        assert 0.0 < chi[4] < 1.0
        assert np.all(dchi <= 0.0)

    def test_profile_derivative(self):
        s = np.linspace(5.2, 9.8, 7)
        h = 1e-6
        fd = (cutoff_profile(s + h, 10.0)[0] - cutoff_profile(s - h, 10.0)[0]) / (2 * h)
        assert np.allclose(fd, cutoff_profile(s, 10.0)[1], atol=1e-7)

    def test_energy_limit(self):
        assert cutoff_energy(1000.0) == pytest.approx(4.0 * math.pi / 3.0, rel=1e-4)

    def test_ball_radius(self):
        assert ball_radius(0.1, 1.5) == pytest.approx(0.1 ** (4.0 / 3.0) * math.log(0.1) ** 2)


class TestFrame:
    """Test suite for build_frame."""

    def test_two_kernels(self, fast_frame):
        assert len(fast_frame.Z) == 2 and len(fast_frame.hatY) == 2
        assert fast_frame.report()["kernels"] == 2

    def test_kernels_mean_zero(self, fast_frame):
        for Z in fast_frame.Z:
            assert abs(Z.mean()) < 1e-12 * np.abs(Z).max()

    def test_gram_diagonal(self, fast_frame):
        gram = fast_frame.gram
        assert abs(gram[0, 1]) < 1e-10 * gram[0, 0]
        assert abs(gram[1, 0]) < 1e-10 * gram[1, 1]
        for i in range(2):
            assert gram[i, i] == pytest.approx(fast_frame.energy_norms[i], rel=1e-5)

    def test_cutoff_bounds(self, fast_frame):
        chi = fast_frame.chi.values
        assert chi.min() >= 0.0 and chi.max() <= 1.0
        Gamma = fast_frame.params.Gamma
        assert np.all(chi[fast_frame.s <= 0.5 * Gamma] == 1.0)
        assert np.all(chi[fast_frame.s >= Gamma] == 0.0)

    def test_parameter_ranges(self, fast_problem, fast_ansatz):
        with pytest.raises(ConfigError, match="p ="):
            build_frame(fast_problem, fast_ansatz, 2.5, 0.25)
        with pytest.raises(ConfigError, match="alpha"):
            build_frame(fast_problem, fast_ansatz, 1.5, 0.6)


class TestProjectionAndNorms:
    """Test suite for Q, X and Y."""

    def test_projection_idempotent(self, smooth_g, fast_frame):
        again, c = project_Q(smooth_g, fast_frame)
        assert np.abs(again - smooth_g).max() < 1e-10
        assert max(abs(c[0]), abs(c[1])) < 1e-10

    def test_projection_orthogonality(self, smooth_g, fast_frame):
        for Y in fast_frame.hatY:
            assert abs(float((smooth_g * Y).mean())) < 1e-12

    def test_kernel_removed(self, fast_frame):
        projected, c = project_Q(fast_frame.Z[0], fast_frame)
        assert c[0] == pytest.approx(1.0, rel=1e-10)
        assert abs(c[1]) < 1e-10
        assert np.abs(projected).max() < 1e-10 * np.abs(fast_frame.Z[0]).max()

    def test_mean_required(self, fast_frame):
        with pytest.raises(NonZeroMean, match="mean zero"):
            project_Q(np.ones((fast_frame.n, fast_frame.n)), fast_frame)
        with pytest.raises(NonZeroMean):
            norm_X(np.ones((fast_frame.n, fast_frame.n)), fast_frame)

    def test_norms_homogeneous(self, smooth_g, fast_frame):
        phi = smooth_meanzero(fast_frame.n, seed=9)
        assert norm_X(2.0 * phi, fast_frame) == pytest.approx(2.0 * norm_X(phi, fast_frame), rel=1e-12)
        assert norm_Y(-3.0 * smooth_g, fast_frame) == pytest.approx(3.0 * norm_Y(smooth_g, fast_frame), rel=1e-12)
        assert norm_X(phi, fast_frame) > 0.0

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_projection_bounded_in_Y(self, seed, fast_frame):
        base = smooth_meanzero(fast_frame.n, seed=seed)
        for scale in (0.0, 0.1, 1.0):
            g = base + scale * fast_frame.Z[0] - 0.5 * scale * fast_frame.Z[1]
            projected, _ = project_Q(g, fast_frame)
            assert norm_Y(projected, fast_frame) <= 10.0 * norm_Y(g, fast_frame)

    def test_norm_X_terms_sum(self, fast_frame):
        phi = smooth_meanzero(fast_frame.n, seed=9)
        terms = norm_X_terms(phi, fast_frame)
        assert set(terms) == {"inner_laplacian", "inner_value", "outer_laplacian", "outer_value"}
        assert all(value >= 0.0 for value in terms.values())
        assert sum(terms.values()) == pytest.approx(norm_X(phi, fast_frame), rel=1e-12)


class TestLinearizedOperator:
    """Test suite for apply_L."""

    def test_mean_zero_output(self, fast_frame):
        phi = smooth_meanzero(fast_frame.n, seed=2) + 0.7
        out = apply_L(phi, fast_frame)
        assert abs(out.mean()) < 1e-10 * np.abs(out).max()

    def test_constants_annihilated(self, fast_frame):
        out = apply_L(np.full((fast_frame.n, fast_frame.n), 2.5), fast_frame)
        assert np.abs(out).max() < 1e-7

    def test_matches_linearized_residual(self, fast_problem, fast_ansatz, fast_frame):
        assert nonlinear_map_defect(fast_problem, fast_ansatz, fast_frame) < 1e-5


class TestBorderedSolve:
    """Test suite for solve_reduced."""

    def test_equation_and_constraints(self, reduced, smooth_g, fast_frame):
        phi = reduced.phi.values
        defect = apply_L(phi, fast_frame) - reduced.c[0] * fast_frame.Z[0] - reduced.c[1] * fast_frame.Z[1] - smooth_g
        assert np.abs(defect).max() == pytest.approx(reduced.residual)
        assert reduced.constraint <= 1e-9
        assert abs(phi.mean()) < 1e-12
        assert reduced.linear_iters > 0
        assert reduced.norms["X_norm"] > 0.0 and reduced.bound_ratio > 0.0

    def test_unique_solution(self, reduced, smooth_g, fast_frame):
        start = smooth_meanzero(fast_frame.n, seed=13)
        other = solve_reduced(smooth_g, fast_frame, x0=start)
        scale = np.abs(reduced.phi.values).max()
        assert np.abs(other.phi.values - reduced.phi.values).max() < 1e-6 * scale
        assert other.c == pytest.approx(reduced.c, rel=1e-5, abs=1e-8)

    def test_mean_required(self, fast_frame):
        with pytest.raises(NonZeroMean):
            solve_reduced(np.ones((fast_frame.n, fast_frame.n)), fast_frame)

    def test_residual_g_is_mean_zero(self, fast_problem, fast_ansatz, fast_frame):
        g0 = residual_g(np.zeros((fast_frame.n, fast_frame.n)), fast_problem, fast_ansatz, fast_frame)
        assert abs(g0.mean()) < 1e-12 * max(1.0, np.abs(g0).max())

    def test_kernel_masses(self, reduced, fast_frame):
        masses = kernel_mass_diagnostics(reduced.phi.values, fast_frame)
        assert set(masses) == {"m0", "m1", "m2", "m0_scaled", "m1_scaled", "m2_scaled"}
        log_t = abs(math.log(fast_frame.params.t))
        assert masses["m1_scaled"] == pytest.approx(log_t * abs(masses["m1"]))


@pytest.fixture(scope="module")
def slow_state(slow_problem):
    return solve_at(slow_problem, (0.0, 0.0))


@pytest.mark.slow
class TestNonlinearSolve:
    """End-to-end reduction at t = 0.12 on a 512-grid."""

    def test_contraction_stays_small(self, slow_state):
        result = slow_state.contraction
        assert result.history[-1] < 1e-10
        assert np.abs(result.phi.values).max() < result.ball_radius
        assert result.iterations == len(result.history)

    def test_warm_repeat_is_stable(self, slow_problem, slow_state):
        again = contraction_solve(slow_problem, slow_state.ansatz, slow_state.frame)
        assert np.abs(again.phi.values - slow_state.contraction.phi.values).max() < 1e-9

    def test_symmetric_configuration(self, slow_problem):
        adjusted = adjust_q(slow_problem, (0.0, 0.0))
        assert adjusted.iterations == 0
        assert max(abs(c) for c in adjusted.c) < 1e-8
        u = adjusted.state.u
        assert relative_residual(slow_problem, u) < 1e-7
        assert abs(u.mean()) < 1e-8

    def test_start_outside_admissible_ball(self, slow_problem):
        with pytest.raises(ConfigError, match="t\\|ln t\\|"):
            adjust_q(slow_problem, (0.3, 0.0))

    def test_fixed_point_inside_ball(self, slow_state):
        result = slow_state.contraction
        assert result.in_ball
        assert result.ball_norm <= result.ball_constant * result.ball_radius
        phi = result.phi.values
        assert result.ball_norm == pytest.approx(np.abs(phi).max() + norm_X(phi, slow_state.frame), rel=1e-12)
        assert set(result.ball_terms) == {"inner_laplacian", "inner_value", "outer_laplacian", "outer_value"}

    def test_tight_ball_rejected(self, slow_problem, slow_state):
        with pytest.raises(OutsideBall) as info:
            contraction_solve(slow_problem, slow_state.ansatz, slow_state.frame, ball_constant=1.0)
        assert info.value.details["ball_norm"] > info.value.details["radius"]
        assert info.value.exit_code == 3

    def test_contraction_factor(self, slow_state):
        """Every step taken well above round-off shrinks the update by more than half."""
        result = slow_state.contraction
        checked = [factor for change, factor in zip(result.history, result.factors) if change > 1e-8]
        assert checked
        assert max(checked) < 0.5

    def test_adjust_from_offset_start(self, slow_problem):
        adjusted = adjust_q(slow_problem, (0.02, 0.01))
        assert adjusted.iterations >= 1
        assert adjusted.history[0][2] > 1e-8
        assert max(abs(c) for c in adjusted.c) < 1e-8
        assert adjusted.jacobian is not None
        assert not adjusted.jacobian_singular
        assert math.hypot(*adjusted.q_star) < 0.01


def _linear_multipliers(monkeypatch, target):
    """Replace solve_at by c(q) = A (q - target), which Newton solves in one step."""
    A = np.array([[2.0, 0.5], [-0.3, 1.5]])

    def fake_solve_at(problem, q):
        c = A @ (np.asarray(q, dtype=float) - np.asarray(target))
        contraction = ContractionResult.model_construct(c=(float(c[0]), float(c[1])))
        return ReducedState.model_construct(contraction=contraction)

    monkeypatch.setattr(reduction, "solve_at", fake_solve_at)
    return A


class TestAdjustQ:
    """Test suite for the Newton loop on q with a synthetic multiplier map."""

    def test_linear_map_solved_in_one_step(self, monkeypatch, fast_problem):
        A = _linear_multipliers(monkeypatch, (0.05, -0.03))
        adjusted = adjust_q(fast_problem, (0.0, 0.0))
        assert adjusted.iterations == 1
        assert adjusted.q_star == pytest.approx((0.05, -0.03), abs=1e-12)
        assert np.allclose(np.array(adjusted.jacobian), A, rtol=1e-8, atol=1e-10)
        assert not adjusted.jacobian_singular
        assert adjusted.history[0][2] > 0.05

    def test_root_outside_ball_diverges(self, monkeypatch, fast_problem):
        _linear_multipliers(monkeypatch, (1.0, 0.0))
        admissible = fast_problem.t * abs(math.log(fast_problem.t))
        with pytest.raises(QAdjustDiverged) as info:
            adjust_q(fast_problem, (0.0, 0.0), max_outer=3)
        history = info.value.details["history"]
        assert len(history) == 4
        assert all(math.hypot(q1, q2) < admissible for q1, q2, _ in history)
