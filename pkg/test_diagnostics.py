"""
Tests for blow-up diagnostics and the sweep driver.

Validates:
- Rate fits with |ln t| corrections
- Local mass, σ₀ bookkeeping and outer deviations on the ansatz
- Profile fit on the ansatz and the core-offset check
- Sweep checkpointing, resume, CSV and JSON output
- Residual and mean acceptance of a solved point
- A real three-point sweep and its rates (slow)
"""

import math
import os
from types import SimpleNamespace

import numpy as np
import pytest

from bubbling import diagnostics
from bubbling.bubble_ansatz import CollapseProblem, ansatz_mass_split, assemble_ansatz, derive_params, outer_deviation
from bubbling.config import ProblemConfig
from bubbling.diagnostics import (
    CHECKPOINT_NAME,
    SolveReport,
    background_mass,
    corrected_outer_error,
    default_radii,
    fit_rate,
    fit_sweep,
    local_mass,
    outer_error,
    pohozaev_check,
    profile_fit,
    rate_defect,
    run_sweep,
    sigma0_curve,
    solve_point,
)
from bubbling.errors import ConfigError, FitRefused, MaxNotInCore, NoConvergence, UnderResolved
from bubbling.field_io import read_json
from bubbling.greens import GreenEvaluator
from bubbling.base_state import WeightSpec
from bubbling.torus_spectral import PeriodicField, make_grid, torus_distance

from conftest import flat_base

EIGHT_PI = 8.0 * math.pi


class TestFitRate:
    """Test suite for fit_rate."""

    def test_exact_power(self):
        t = [0.2, 0.1, 0.05, 0.025]
        fit = fit_rate(t, [3.0 * s ** 2 for s in t])
        assert fit.exponent == pytest.approx(2.0, abs=1e-12)
        assert fit.half_width < 1e-8
        assert fit.points == 4

    def test_log_correction_divided_out(self):
        t = [0.12, 0.1, 0.08, 0.06]
        fit = fit_rate(t, [s * abs(math.log(s)) for s in t], log_power=1)
        assert fit.exponent == pytest.approx(1.0, abs=1e-12)
        assert fit.log_power == 1

    def test_sign_ignored(self):
        t = [0.2, 0.1, 0.05]
        assert fit_rate(t, [-s for s in t]).exponent == pytest.approx(1.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(FitRefused, match="at least 3"):
            fit_rate([0.2, 0.1, 0.05, 0.02], [1.0, math.nan, 0.0, 2.0])


class TestLocalMass:
    """Test suite for local mass and σ₀."""

    def test_matches_ansatz_inner_mass(self, fast_problem, fast_ansatz):
        u = fast_ansatz.U.values
        radius = fast_problem.t * fast_problem.R0
        expected = ansatz_mass_split(fast_problem, fast_ansatz)["inner_mass"]
        assert local_mass(fast_problem, u, radius) == pytest.approx(expected, rel=1e-9)

    def test_monotone_in_radius(self, fast_problem, fast_ansatz):
        u = fast_ansatz.U.values
        masses = [local_mass(fast_problem, u, r) for r in np.linspace(0.01, 0.44, 12)]
        assert all(b >= a for a, b in zip(masses, masses[1:]))
        assert masses[-1] < fast_problem.rho

    def test_radius_limit(self, fast_problem, fast_ansatz):
        with pytest.raises(ConfigError, match="r0"):
            local_mass(fast_problem, fast_ansatz.U.values, fast_problem.r0)

    def test_background_share(self, fast_problem):
        r = 0.3
        inside = int((torus_distance(fast_problem.grid, (0.0, 0.0)) < r).sum())
        expected = (fast_problem.rho - EIGHT_PI) * inside / fast_problem.grid.n ** 2
        assert background_mass(fast_problem, r) == pytest.approx(expected, rel=1e-12)

    def test_sigma0_curve(self, fast_problem, fast_ansatz):
        radii = default_radii(fast_problem)
        assert radii == sorted(radii) and all(r < fast_problem.r0 for r in radii)
        curve = sigma0_curve(fast_problem, fast_ansatz.U.values, (0.0, 0.0), radii)
        for point in curve:
            assert point["corrected"] == pytest.approx(point["mass"] - background_mass(fast_problem, point["r"]))

    def test_pohozaev_bookkeeping(self, fast_problem, fast_ansatz):
        Gamma = fast_ansatz.params.Gamma
        check = pohozaev_check(fast_problem, fast_ansatz.U.values, (0.0, 0.0), Gamma)
        assert check["m0_tail"] == pytest.approx(EIGHT_PI / (1.0 + 0.25 * Gamma ** 2))
        assert check["m0"] == pytest.approx(check["m0_core"] + check["m0_tail"])
        s, m = check["sigma0"], check["m0"]
        assert check["residual"] == pytest.approx((s - m) * (s + m) - 24.0 * math.pi * (s - m))
        assert check["gap"] == pytest.approx(abs(s - m))


class TestOuterErrors:
    """Test suite for the outer deviations."""

    def test_ansatz_outer_closed_form(self, fast_problem, fast_ansatz):
        params = fast_ansatz.params
        radius = 1.05 * params.t * params.R0
        far = torus_distance(fast_problem.grid, (0.0, 0.0)) >= radius
        G = fast_problem.greens.green((0.0, 0.0)).values
        expected = float(np.abs(params.Bconst - EIGHT_PI * params.theta * G[far]).max())
        value = outer_deviation(fast_problem, fast_ansatz.ustar.values, (0.0, 0.0), radius)
        assert value == pytest.approx(expected, rel=1e-9, abs=1e-11)

    def test_no_nodes_beyond_radius(self, fast_problem, fast_ansatz):
        # 2tR0 = 0.88 exceeds every torus distance
        assert math.isnan(outer_error(fast_problem, fast_ansatz.U.values, (0.0, 0.0)))
        corrected = corrected_outer_error(fast_problem, fast_ansatz.U.values, (0.0, 0.0), EIGHT_PI)
        assert math.isnan(corrected["sup"]) and math.isnan(corrected["grad_sup"])


@pytest.fixture(scope="module")
def offset_problem():
    config = ProblemConfig.model_validate({"t": 0.05, "R0": 2.2, "r0": 0.45, "t_list": "0.1,0.08,0.05"})
    return CollapseProblem(config, GreenEvaluator(make_grid(64)), WeightSpec(), flat_base())


class TestProfileFit:
    """Test suite for profile_fit."""

    def test_peak_off_core(self, offset_problem):
        d = torus_distance(offset_problem.grid, (1.0 / 64.0, 0.0))
        u = 5.0 * np.exp(-d ** 2 / 2e-3)
        with pytest.raises(MaxNotInCore, match="exceeds"):
            profile_fit(offset_problem, u)

    @pytest.mark.slow
    def test_ansatz_peak(self, slow_problem):
        params = derive_params(slow_problem, (0.0, 0.0))
        ansatz = assemble_ansatz(slow_problem, params)
        fit = profile_fit(slow_problem, ansatz.U.values, Gamma=params.Gamma)
        assert math.hypot(*fit.p_t) < 1e-6
        expected = params.lam - EIGHT_PI * params.theta * slow_problem.robin - math.log1p(ansatz.Aconst)
        assert fit.lambda_meas == pytest.approx(expected, abs=1e-6)
        assert fit.R_t == pytest.approx(math.sqrt(fit.C_t) * math.exp(0.5 * fit.lambda_meas))
        assert math.isfinite(rate_defect(slow_problem, fit))

    @pytest.mark.slow
    def test_corrected_outer_error_on_ansatz(self, slow_problem):
        params = derive_params(slow_problem, (0.0, 0.0))
        ansatz = assemble_ansatz(slow_problem, params)
        corrected = corrected_outer_error(slow_problem, ansatz.ustar.values, (0.0, 0.0),
                                          EIGHT_PI * (1.0 - params.theta))
        assert corrected["sup"] == pytest.approx(abs(params.Bconst), rel=1e-9)
        assert corrected["grad_sup"] < 1e-8


def fake_report(t: float) -> SolveReport:
    log_t = abs(math.log(t))
    return SolveReport(
        t=t, grid_n=64, q_star=(0.0, 0.0), c=(0.0, 0.0), params={"Lambda": 1.0 / t},
        lambda_pred=1.0, lambda_meas=1.0 + t, p_t=(0.0, 0.0), rho_t=EIGHT_PI + t * log_t,
        sigma0_curve=[{"r": 0.1, "mass": EIGHT_PI, "corrected": EIGHT_PI}],
        pohozaev={"sigma0": EIGHT_PI, "m0": EIGHT_PI}, outer_err=t ** 1.5, outer_err_corrected=t ** 2,
        outer_grad_corrected=t, eta_profile=t, rate_defect=t * t, kernel_masses={"m0": t},
        mean_ustar=2.0 * t * t, Aconst=t, g0_norm_Y=t, Z_norm_Y=(1.0, 1.0), bound_ratio=0.5,
        contraction={"iterations": 3}, adjust={"iterations": 0}, residual=1e-9, mean_u=0.0,
    )


@pytest.fixture
def fake_pipeline(monkeypatch):
    calls = []

    def build_problem(config, base, t=None, greens_cache=None):
        return SimpleNamespace(t=config.t)

    def solve_point(problem):
        calls.append(problem.t)
        if problem.t == 0.06:
            raise UnderResolved("core too narrow", {"t": problem.t})
        return fake_report(problem.t), PeriodicField(grid=make_grid(16), values=np.zeros((16, 16)))

    monkeypatch.setattr(diagnostics, "build_problem", build_problem)
    monkeypatch.setattr(diagnostics, "solve_point", solve_point)
    return calls


class TestSweep:
    """Test suite for run_sweep."""

    def test_sweep_outputs(self, fake_pipeline, tmp_path):
        config = ProblemConfig()
        result = run_sweep(config, str(tmp_path), base=flat_base(), save_fields=True)
        assert fake_pipeline == [0.12, 0.1, 0.08, 0.06]
        assert set(result.reports) == {"0.12", "0.1", "0.08"}
        assert result.failures["0.06"]["error"] == "UnderResolved"
        assert result.fits["mean_ustar"]["exponent"] == pytest.approx(2.0, abs=1e-10)
        assert result.fits["rho_t_minus_8pi"]["exponent"] == pytest.approx(1.0, abs=1e-10)
        assert result.fits["outer_err"]["exponent"] == pytest.approx(1.5, abs=1e-10)

        lines = (tmp_path / "sweep.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("t,grid_n,lambda_pred")
        assert len(lines) == 5
        assert lines[-1].startswith("0.06,") and lines[-1].endswith(",failed")
        report = read_json(str(tmp_path / "sweep_report.json"))
        assert report["config"]["rho_over_pi"] == pytest.approx(12.0)
        assert os.path.exists(tmp_path / "u_t0.12.pfld")

    def test_resume_skips_finished_points(self, fake_pipeline, tmp_path, capsys):
        config = ProblemConfig()
        run_sweep(config, str(tmp_path), base=flat_base())
        checkpoint = read_json(str(tmp_path / CHECKPOINT_NAME))
        assert sorted(checkpoint["reports"]) == ["0.08", "0.1", "0.12"]
        fake_pipeline.clear()
        result = run_sweep(config, str(tmp_path), resume=True, base=flat_base())
        assert fake_pipeline == [0.06]
        assert "Resuming from checkpoint with 3 completed points" in capsys.readouterr().out
        assert result.reports["0.1"].rho_t == pytest.approx(EIGHT_PI + 0.1 * abs(math.log(0.1)))

    def test_too_few_points(self, tmp_path):
        config = ProblemConfig(t_list=(0.12, 0.1))
        with pytest.raises(ConfigError, match="at least 3"):
            run_sweep(config, str(tmp_path), base=flat_base())

    def test_refused_fit_recorded(self):
        reports = {f"{t:.6g}": fake_report(t) for t in (0.12, 0.1)}
        fits = fit_sweep(reports)
        assert "refused" in fits["outer_err"]


@pytest.fixture
def stubbed_solve(monkeypatch, fast_problem):
    """Replace adjust_q and the residual so solve_point sees a chosen u and residual."""

    def install(u: np.ndarray, residual: float) -> None:
        state = SimpleNamespace(params=None, ansatz=None, frame=None, contraction=None, u=u)
        adjusted = SimpleNamespace(q_star=(0.0, 0.0), c=(0.0, 0.0), state=state)
        monkeypatch.setattr(diagnostics, "adjust_q", lambda problem, q0, c_tol, max_outer: adjusted)
        monkeypatch.setattr(diagnostics, "relative_residual", lambda problem, values: residual)

    return install


class TestSolvePointAcceptance:
    """Test suite for the convergence checks of solve_point."""

    def test_large_residual_rejected(self, stubbed_solve, fast_problem, fast_ansatz):
        stubbed_solve(fast_ansatz.U.values, 1.0)
        with pytest.raises(NoConvergence, match="residual") as info:
            solve_point(fast_problem)
        assert info.value.details["residual"] == 1.0
        assert info.value.exit_code == 3

    def test_nonzero_mean_rejected(self, stubbed_solve, fast_problem):
        n = fast_problem.grid.n
        stubbed_solve(np.full((n, n), 1e-6), 0.0)
        with pytest.raises(NoConvergence, match="mean") as info:
            solve_point(fast_problem)
        assert info.value.details["mean_u"] == pytest.approx(1e-6)


@pytest.mark.slow
class TestRealSweep:
    """Three resolved solves on a flat base and the rates measured across them."""

    @pytest.fixture(scope="class")
    def sweep(self, tmp_path_factory):
        config = ProblemConfig.model_validate(
            {"t": 0.12, "R0": 2.2, "r0": 0.35, "t_list": "0.14,0.13,0.12", "grid_n": 512})
        return run_sweep(config, str(tmp_path_factory.mktemp("sweep")), base=flat_base())

    def test_every_point_converges(self, sweep):
        assert not sweep.failures
        assert set(sweep.reports) == {"0.14", "0.13", "0.12"}
        for report in sweep.reports.values():
            assert report.residual < 1e-7
            assert abs(report.mean_u) < 1e-8
            assert max(abs(c) for c in report.c) < 1e-8
            assert report.contraction["in_ball"]
            assert report.contraction["ball_norm"] <= report.contraction["ball_constant"] * report.contraction["ball_radius"]

    def test_scales_move_with_t(self, sweep):
        ordered = [sweep.reports[key] for key in ("0.14", "0.13", "0.12")]
        scaled = [r.params["Lambda"] * r.t ** 2 for r in ordered]
        assert max(scaled) / min(scaled) < 2.0
        thetas = [r.params["theta"] for r in ordered]
        assert thetas[0] > thetas[1] > thetas[2]
        heights = [r.lambda_meas for r in ordered]
        assert heights[0] < heights[1] < heights[2]

    def test_local_mass_approaches_eight_pi(self, sweep):
        # the smooth background in B_{tR0} shrinks like t²
        gaps = [sweep.reports[key].rho_t - EIGHT_PI for key in ("0.14", "0.13", "0.12")]
        assert all(-1.0 < gap < 5.0 for gap in gaps)
        assert abs(gaps[0]) > abs(gaps[1]) > abs(gaps[2])

    def test_ansatz_mean_bound(self, sweep):
        for report in sweep.reports.values():
            assert abs(report.mean_ustar) <= report.t ** 2 * abs(math.log(report.t))

    def test_fits_populated(self, sweep):
        assert set(sweep.fits) == set(diagnostics.FIT_QUANTITIES)
        for name, fit in sweep.fits.items():
            assert "refused" not in fit, name
            assert fit["points"] == 3
            assert math.isfinite(fit["exponent"])
        for report in sweep.reports.values():
            assert math.isfinite(report.outer_err)
