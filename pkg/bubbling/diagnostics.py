"""
Diagnostics Module

This module handles blow-up diagnostics on computed solutions and the
rate-verification sweep:

- local mass ρ_t and the σ₀ curve, the Pohozaev check (σ₀, m₀)
- the profile fit of the scaled field v̄_t (peak location p_t, measured
  height λ_t, the doubly scaled error η̃_t) and the blow-up-rate defect
- outer errors of u against w + 8πG(·, tq) and w + ρ_t G(·, tp_t)
- log-log rate fits with confidence half-widths
- the per-point pipeline and the checkpointed sweep over t
"""

import json
import logging
import math
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats
from scipy.optimize import minimize
from tqdm import tqdm

from .base_state import BaseSolution, WeightSpec, assemble_h, h_values, solve_base
from .bubble_ansatz import (
    EIGHT_PI,
    CollapseProblem,
    density,
    derive_params,
    outer_deviation,
    required_grid_n,
)
from .config import OUTPUT_DIR, SHOW_PROGRESS, ProblemConfig, config_summary
from .errors import BubblingError, ConfigError, FitRefused, MaxNotInCore, NoConvergence
from .field_io import dump_field, to_jsonable, write_csv, write_json
from .greens import GreenEvaluator
from .reduction import (
    adjust_q,
    kernel_mass_diagnostics,
    norm_Y,
    relative_residual,
    residual_g,
)
from .torus_spectral import (
    PeriodicField,
    interpolate,
    make_grid,
    node_coordinates,
    torus_displacement,
    torus_distance,
)

logger = logging.getLogger(__name__)

MAX_CORE_OFFSET = 5.0
MEAN_U_TOL = 1e-8
CONFIDENCE = 0.975
CHECKPOINT_NAME = "sweep_checkpoint.json"
CSV_COLUMNS = ["t", "grid_n", "lambda_pred", "lambda_meas", "rho_t", "outer_err", "outer_err_corrected",
               "mean_ustar", "sigma0", "m0", "eta_profile", "residual", "status"]


def _log_total(problem: CollapseProblem, u: np.ndarray) -> float:
    """ln ∫ h e^{u - G_t}, with the maximum of u factored out."""
    peak = float(u.max())
    return peak + math.log(float((problem.weight * np.exp(u - peak)).mean()))


def local_mass(problem: CollapseProblem, u: np.ndarray, r: float, centre=(0.0, 0.0)) -> float:
    """
    ρ ∫_{B_r(centre)} h e^{u-G_t} / ∫_M h e^{u-G_t} by grid quadrature.

    Args:
        problem: Collapse problem
        u: Candidate solution on the problem grid
        r: Ball radius, below r0
        centre: Ball centre in torus coordinates

    Raises:
        ConfigError: If r ≥ r0
    """
    if r >= problem.r0:
        raise ConfigError(f"local mass radius {r:.4g} must be smaller than r0 = {problem.r0}")
    nu = density(problem, np.asarray(u))
    inside = torus_distance(problem.grid, centre) < r
    return problem.rho * float(nu[inside].sum()) / nu.size


def background_mass(problem: CollapseProblem, r: float, centre=(0.0, 0.0)) -> float:
    """(ρ - 8π) ∫_{B_r} h e^w / ∫ h e^w, the share the base state alone puts in the ball."""
    nu_w = problem.h.values * np.exp(problem.w.values) / problem.mass_w
    inside = torus_distance(problem.grid, centre) < r
    return (problem.rho - EIGHT_PI) * float(nu_w[inside].sum()) / nu_w.size


def sigma0_curve(problem: CollapseProblem, u: np.ndarray, centre, radii: Sequence[float]) -> List[Dict[str, float]]:
    """Local mass and background-corrected local mass over a radius ladder."""
    curve = []
    for r in radii:
        mass = local_mass(problem, u, r, centre)
        curve.append({"r": float(r), "mass": mass, "corrected": mass - background_mass(problem, r, centre)})
    return curve


def default_radii(problem: CollapseProblem) -> List[float]:
    t = problem.t
    ladder = [t * problem.R0, 2.0 * t * problem.R0, math.sqrt(t), 0.5 * (math.sqrt(t) + problem.r0)]
    return sorted(r for r in set(ladder) if r < problem.r0)


def pohozaev_check(problem: CollapseProblem, u: np.ndarray, centre, Gamma: float) -> Dict[str, float]:
    """
    Local mass σ₀ at the intermediate scale r = t^{1/2} against the core mass m₀.

    σ₀ has the smooth background (ρ - 8π)∫_{B_r}ν_w removed. m₀ is the mass in
    B_{tR0/2}(centre), i.e. |z| < Γ/2 in bubble coordinates, and the entire
    bubble's tail 8π/(1 + Γ²/4) beyond it is added for the limit value.
    """
    r_mid = math.sqrt(problem.t)
    sigma_raw = local_mass(problem, u, r_mid, centre)
    sigma0 = sigma_raw - background_mass(problem, r_mid, centre)
    m0_core = local_mass(problem, u, 0.5 * problem.t * problem.R0, centre)
    tail = EIGHT_PI / (1.0 + 0.25 * Gamma ** 2)
    m0 = m0_core + tail
    residual = (sigma0 - m0) * (sigma0 + m0) - 24.0 * math.pi * (sigma0 - m0)
    return {"sigma0": sigma0, "sigma0_raw": sigma_raw, "m0": m0, "m0_core": m0_core, "m0_tail": tail,
            "residual": residual, "gap": abs(sigma0 - m0)}


class ProfileFit(BaseModel):
    """Peak of v̄_t and the profile error η̃_t around it."""

    model_config = ConfigDict(frozen=True)

    p_t: Tuple[float, float]
    lambda_meas: float
    C_t: float
    R_t: float
    rho_t: float
    eta_max_weighted: float
    eta_at_peak: float


def scaled_profile(problem: CollapseProblem, u: np.ndarray) -> PeriodicField:
    """v̄_t on the x-grid: u - ln ∫ h e^{u-G_t} + 6 ln t - w."""
    u = np.asarray(u)
    values = u - _log_total(problem, u) + 6.0 * math.log(problem.t) - problem.w.values
    return PeriodicField(grid=problem.grid, values=values)


def _peak(profile: PeriodicField, radius: float) -> np.ndarray:
    """Interpolated maximum of a field over B_radius(0)."""
    d = torus_distance(profile.grid, (0.0, 0.0))
    masked = np.where(d < radius, profile.values, -np.inf)
    i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
    x1, x2 = node_coordinates(profile.grid)
    start = np.array([x1[i, j], x2[i, j]])
    start = np.where(start > 0.5, start - 1.0, start)
    h = profile.grid.spacing
    result = minimize(lambda x: -interpolate(profile, x), start, method="Nelder-Mead",
                      options={"xatol": 1e-10 * h, "fatol": 1e-14, "initial_simplex": [
                          start, start + [0.5 * h, 0.0], start + [0.0, 0.5 * h]]})
    if not result.success:
        logger.warning("peak refinement stopped early: %s", result.message)
    return result.x if -result.fun >= masked[i, j] else start


def profile_fit(problem: CollapseProblem, u: np.ndarray, eps: float = 0.25, Gamma: Optional[float] = None) -> ProfileFit:
    """
    Locate the maximum of v̄_t in B_{r0}(0) (vortex scale) and measure η̃_t.

    With tp_t the refined maximum, C_t = ρh(tp_t)e^{w(tp_t)}|p_t-e|²|p_t+e|²e^{-R_t(tp_t)}/8,
    R_t = C_t^{1/2}e^{λ_t/2} and the model profile
    I_t(y) = ln(e^{λ_t}/(1 + C_t e^{λ_t}|y - p_t|²)²), the error is
    η_t(y) = v̄_t(y) - I_t(y) - ρ_t(R(ty, tp_t) - R(tp_t, tp_t)); the report is
    max |η_t| (1 + |z|)^{-ε} over |z| = R_t|y - p_t| ≤ Γ/2.

    Raises:
        MaxNotInCore: If |p_t| exceeds 5t
    """
    u = np.asarray(u)
    t = problem.t
    profile = scaled_profile(problem, u)
    x_peak = _peak(profile, t * problem.r0)
    p_t = x_peak / t
    if float(np.hypot(*p_t)) > MAX_CORE_OFFSET * t:
        raise MaxNotInCore(
            f"|p_t| = {float(np.hypot(*p_t)):.4g} exceeds {MAX_CORE_OFFSET}t = {MAX_CORE_OFFSET * t:.4g}",
            {"p_t": p_t.tolist(), "t": t},
        )
    lambda_meas = interpolate(profile, x_peak)
    point = x_peak[None, :]
    h_peak = float(h_values(problem.spec, point, problem.greens)[0])
    sw_peak = float(problem.greens.singular_weight_values(point, problem.pair)[0])
    C_t = problem.rho * h_peak * math.exp(float(problem.w_at(point)[0])) * sw_peak / (8.0 * t ** 4)
    R_t = math.sqrt(C_t) * math.exp(0.5 * lambda_meas)
    rho_t = local_mass(problem, u, t * problem.R0, x_peak)

    dx1, dx2 = torus_displacement(problem.grid, x_peak)
    y_offset2 = (dx1 ** 2 + dx2 ** 2) / t ** 2
    z = R_t * np.sqrt(y_offset2)
    model = lambda_meas - 2.0 * np.log1p(C_t * math.exp(lambda_meas) * y_offset2)
    regular = problem.greens.regular_field(tuple(x_peak)).values - problem.robin
    eta = profile.values - model - rho_t * regular
    limit = 0.5 * (Gamma if Gamma is not None else R_t * problem.R0)
    core = z <= limit
    weighted = np.abs(eta[core]) / (1.0 + z[core]) ** eps
    fit = ProfileFit(
        p_t=(float(p_t[0]), float(p_t[1])), lambda_meas=float(lambda_meas), C_t=C_t, R_t=R_t, rho_t=rho_t,
        eta_max_weighted=float(weighted.max()) if weighted.size else 0.0,
        eta_at_peak=float(eta.flat[int(np.argmin(z))]),
    )
    logger.info("Profile t=%.4g: p_t=(%.3e, %.3e) lambda=%.6f rho_t=%.6f eta=%.3e",
                t, fit.p_t[0], fit.p_t[1], fit.lambda_meas, rho_t, fit.eta_max_weighted)
    return fit


def rate_defect(problem: CollapseProblem, fit: ProfileFit) -> float:
    """λ_t + 2 ln t + 2 ln C_t + 8πR(tp_t, tp_t) - ln(ρ/(ρ-8π) ∫ h e^w)."""
    return (fit.lambda_meas + 2.0 * math.log(problem.t) + 2.0 * math.log(fit.C_t)
            + EIGHT_PI * problem.robin - problem.log_K)


def outer_error(problem: CollapseProblem, u: np.ndarray, q_star) -> float:
    """sup outside B_{2tR0}(tq*) of |u - w - 8πG(·, tq*)|."""
    centre = problem.centre(q_star)
    return outer_deviation(problem, np.asarray(u), centre, 2.0 * problem.t * problem.R0)


def _centred_gradient(values: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Fourth-order centred differences along both axes."""
    grads = []
    for axis in (0, 1):
        grads.append((8.0 * (np.roll(values, -1, axis) - np.roll(values, 1, axis))
                      - (np.roll(values, -2, axis) - np.roll(values, 2, axis))) / (12.0 * h))
    return grads[0], grads[1]


def corrected_outer_error(problem: CollapseProblem, u: np.ndarray, centre, rho_t: float) -> Dict[str, float]:
    """
    Sup and gradient sup of φ̃_t = u - w - ρ_t G(·, centre) outside B_{2tR0}(centre).

    The gradient stencil reaches two cells, so nodes within two cells of the
    ball are dropped from the gradient sup.
    """
    centre = np.asarray(centre, dtype=float)
    radius = 2.0 * problem.t * problem.R0
    tilde = np.asarray(u) - problem.w.values - rho_t * problem.greens.green(tuple(centre)).values
    d = torus_distance(problem.grid, centre)
    far = d >= radius
    if not far.any():
        logger.warning("no grid nodes lie beyond 2tR0 = %.4g", radius)
        return {"sup": math.nan, "grad_sup": math.nan}
    g1, g2 = _centred_gradient(tilde, problem.grid.spacing)
    far_grad = d >= radius + 2.0 * problem.grid.spacing
    return {
        "sup": float(np.abs(tilde[far]).max()),
        "grad_sup": float(np.hypot(g1, g2)[far_grad].max()),
    }


class RateFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    exponent: float
    half_width: float
    intercept: float
    points: int
    log_power: int = 0


def fit_rate(t_values: Sequence[float], values: Sequence[float], log_power: int = 0) -> RateFit:
    """
    Least-squares fit of ln(|v| / |ln t|^k) against ln t.

    Args:
        t_values: Collapse parameters
        values: Measured quantities
        log_power: k, the power of |ln t| carried by the bound

    Returns:
        RateFit with the slope and its 97.5% Student-t half-width

    Raises:
        FitRefused: With fewer than three finite nonzero points
    """
    pairs = [(float(t), abs(float(v))) for t, v in zip(t_values, values)
             if v is not None and math.isfinite(float(v)) and float(v) != 0.0]
    if len(pairs) < 3:
        raise FitRefused(f"rate fit needs at least 3 usable points, got {len(pairs)}", {"points": len(pairs)})
    log_t = np.log([t for t, _ in pairs])
    log_v = np.log([v / abs(math.log(t)) ** log_power for t, v in pairs])
    result = stats.linregress(log_t, log_v)
    dof = len(pairs) - 2
    half_width = float(stats.t.ppf(CONFIDENCE, dof) * result.stderr) if dof > 0 else math.inf
    return RateFit(exponent=float(result.slope), half_width=half_width, intercept=float(result.intercept),
                   points=len(pairs), log_power=log_power)


class SolveReport(BaseModel):
    """Everything measured at one collapse parameter."""

    model_config = ConfigDict(frozen=True)

    t: float
    grid_n: int
    q_star: Tuple[float, float]
    c: Tuple[float, float]
    params: Dict[str, Any]
    lambda_pred: float
    lambda_meas: float
    p_t: Tuple[float, float]
    rho_t: float
    sigma0_curve: List[Dict[str, float]]
    pohozaev: Dict[str, float]
    outer_err: float
    outer_err_corrected: float
    outer_grad_corrected: float
    eta_profile: float
    rate_defect: float
    kernel_masses: Dict[str, float]
    mean_ustar: float
    Aconst: float
    g0_norm_Y: float
    Z_norm_Y: Tuple[float, float]
    bound_ratio: float
    contraction: Dict[str, Any]
    adjust: Dict[str, Any]
    residual: float
    mean_u: float

    def row(self) -> Dict[str, Any]:
        return {
            "t": self.t, "grid_n": self.grid_n, "lambda_pred": self.lambda_pred,
            "lambda_meas": self.lambda_meas, "rho_t": self.rho_t, "outer_err": self.outer_err,
            "outer_err_corrected": self.outer_err_corrected, "mean_ustar": self.mean_ustar,
            "sigma0": self.pohozaev["sigma0"], "m0": self.pohozaev["m0"], "eta_profile": self.eta_profile,
            "residual": self.residual, "status": "ok",
        }


def build_problem(config: ProblemConfig, base: BaseSolution, t: Optional[float] = None,
                  greens_cache: Optional[Dict[int, GreenEvaluator]] = None) -> CollapseProblem:
    """
    Collapse problem on the configured grid, or on the smallest grid resolving the core.

    The automatic size is taken from the bubble constants at q0, evaluated on
    the base-state grid.
    """
    cache = greens_cache if greens_cache is not None else {}
    spec = WeightSpec.from_config(config)
    t = config.t if t is None else t

    def evaluator(n: int) -> GreenEvaluator:
        if n not in cache:
            cache[n] = GreenEvaluator(make_grid(n), sigma=config.ewald_sigma)
        return cache[n]

    n = config.grid_n
    if not n:
        coarse = CollapseProblem(config, evaluator(config.base_grid_n), spec, base, t=t)
        n = max(required_grid_n(derive_params(coarse, config.q0).Lambda, config.max_grid_n), config.base_grid_n)
        logger.info("Automatic grid for t=%.4g: n=%d", t, n)
    return CollapseProblem(config, evaluator(n), spec, base, t=t)


def solve_point(problem: CollapseProblem) -> Tuple[SolveReport, PeriodicField]:
    """
    Run the nonlinear solve at one t and measure every diagnostic.

    Returns:
        (SolveReport, final solution u)

    Raises:
        NoConvergence: If the final residual exceeds residual_tol or u is
            not mean-zero to MEAN_U_TOL
    """
    config = problem.config
    adjusted = adjust_q(problem, config.q0, c_tol=config.c_tol, max_outer=config.max_outer)
    state = adjusted.state
    params, ansatz, frame, contraction = state.params, state.ansatz, state.frame, state.contraction
    u = state.u
    centre = problem.centre(adjusted.q_star)

    residual = relative_residual(problem, u)
    mean_u = float(u.mean())
    if residual > config.residual_tol:
        raise NoConvergence(
            f"t={problem.t:.4g}: final residual {residual:.3e} above residual_tol {config.residual_tol:.1e}",
            {"t": problem.t, "residual": residual, "q_star": adjusted.q_star},
        )
    if abs(mean_u) > MEAN_U_TOL:
        raise NoConvergence(
            f"t={problem.t:.4g}: solution mean {mean_u:.3e} is not zero",
            {"t": problem.t, "mean_u": mean_u, "q_star": adjusted.q_star},
        )

    fit = profile_fit(problem, u, eps=config.eps, Gamma=params.Gamma)
    peak = np.asarray(fit.p_t) * problem.t
    corrected = corrected_outer_error(problem, u, peak, fit.rho_t)
    g0 =residual_g(np.zeros_like(u), problem, ansatz, frame)
    w_tq = float(problem.w_at(centre)[0])
    report = SolveReport(
        t=problem.t,
        grid_n=problem.grid.n,
        q_star=adjusted.q_star,
        c=adjusted.c,
        params=params.to_report(),
        lambda_pred=params.lam - w_tq,
        lambda_meas=fit.lambda_meas,
        p_t=fit.p_t,
        rho_t=local_mass(problem, u, problem.t * problem.R0, centre),
        sigma0_curve=sigma0_curve(problem, u, centre, default_radii(problem)),
        pohozaev=pohozaev_check(problem, u, centre, params.Gamma),
        outer_err=outer_error(problem, u, adjusted.q_star),
        outer_err_corrected=corrected["sup"],
        outer_grad_corrected=corrected["grad_sup"],
        eta_profile=fit.eta_max_weighted,
        rate_defect=rate_defect(problem, fit),
        kernel_masses=kernel_mass_diagnostics(contraction.phi.values, frame),
        mean_ustar=ansatz.mean_ustar,
        Aconst=ansatz.Aconst,
        g0_norm_Y=norm_Y(g0, frame),
        Z_norm_Y=(norm_Y(frame.Z[0], frame), norm_Y(frame.Z[1], frame)),
        bound_ratio=contraction.last_solve.bound_ratio,
        contraction={
            "iterations": contraction.iterations, "history": list(contraction.history),
            "factors": list(contraction.factors), "ball_radius": contraction.ball_radius,
            "ball_norm": contraction.ball_norm, "ball_constant": contraction.ball_constant,
            "ball_terms": dict(contraction.ball_terms), "in_ball": contraction.in_ball,
            "linear_iters": contraction.last_solve.linear_iters, "frame": frame.report(),
        },
        adjust={
            "iterations": adjusted.iterations, "history": [list(h) for h in adjusted.history],
            "jacobian": adjusted.jacobian, "jacobian_cond": adjusted.jacobian_cond,
            "jacobian_singular": adjusted.jacobian_singular,
        },
        residual=residual,
        mean_u=mean_u,
    )
    return report, PeriodicField(grid=problem.grid, values=u)


class SweepResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_values: Tuple[float, ...]
    reports: Dict[str, SolveReport]
    failures: Dict[str, Dict[str, Any]]
    fits: Dict[str, Dict[str, Any]]

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable(self.model_dump())


def _t_key(t: float) -> str:
    return f"{t:.6g}"


# quantity name -> (report attribute getter, |ln t| power of the bound)
FIT_QUANTITIES = {
    "mean_ustar": (lambda r: r.mean_ustar, 0),
    "rho_t_minus_8pi": (lambda r: r.rho_t - EIGHT_PI, 1),
    "outer_err": (lambda r: r.outer_err, 0),
    "lambda_gap": (lambda r: r.lambda_meas - r.lambda_pred, 0),
    "g0_norm_Y": (lambda r: r.g0_norm_Y, 0),
}


def fit_sweep(reports: Dict[str, SolveReport]) -> Dict[str, Dict[str, Any]]:
    """Rate fits for every tracked quantity; refused fits are recorded, not raised."""
    ordered = sorted(reports.values(), key=lambda r: r.t, reverse=True)
    fits: Dict[str, Dict[str, Any]] = {}
    for name, (getter, log_power) in FIT_QUANTITIES.items():
        try:
            fits[name] = fit_rate([r.t for r in ordered], [getter(r) for r in ordered], log_power).model_dump()
        except FitRefused as exc:
            logger.warning("Fit for %s refused: %s", name, exc)
            fits[name] = {"refused": str(exc)}
    return fits


def solve_sweep_base(config: ProblemConfig, greens_cache: Optional[Dict[int, GreenEvaluator]] = None) -> BaseSolution:
    cache = greens_cache if greens_cache is not None else {}
    n = config.base_grid_n
    if n not in cache:
        cache[n] = GreenEvaluator(make_grid(n), sigma=config.ewald_sigma)
    h = assemble_h(WeightSpec.from_config(config), cache[n])
    return solve_base(config.rho, h, newton_tol=config.newton_tol, max_iter=config.max_newton_iter,
                      margin_tol=config.margin_tol)


def run_sweep(
    config: ProblemConfig,
    output_dir: str = OUTPUT_DIR,
    resume: bool = False,
    base: Optional[BaseSolution] = None,
    save_fields: bool = False,
) -> SweepResult:
    """
    Run the full pipeline for every t in config.t_list.

    The base state is solved once. After each point the completed reports are
    checkpointed to output_dir/sweep_checkpoint.json; with resume=True points
    already in the checkpoint are skipped. A failing point is recorded with
    its error and the sweep continues.

    Args:
        config: Problem configuration; t_list needs at least three values
        output_dir: Directory for the checkpoint, CSV table and JSON report
        resume: Skip points already stored in the checkpoint
        base: Optional precomputed base state
        save_fields: Also dump every final u as a field file

    Returns:
        SweepResult with per-t reports, failures and fits

    Raises:
        ConfigError: If fewer than three t values are configured
    """
    t_values = tuple(sorted(config.t_list, reverse=True))
    if len(t_values) < 3:
        raise ConfigError(f"a sweep needs at least 3 t values, got {len(t_values)}")
    os.makedirs(output_dir, exist_ok=True)
    checkpoint_path = os.path.join(output_dir, CHECKPOINT_NAME)

    reports: Dict[str, SolveReport] = {}
    failures: Dict[str, Dict[str, Any]] = {}
    if resume and os.path.exists(checkpoint_path):
        with open(checkpoint_path, "r", encoding="utf-8") as f:
            stored = json.load(f)
        reports = {key: SolveReport.model_validate(value) for key, value in stored.get("reports", {}).items()}
        print(f"Resuming from checkpoint with {len(reports)} completed points")

    greens_cache: Dict[int, GreenEvaluator] = {}
    if base is None:
        base = solve_sweep_base(config, greens_cache)

    for t in (pbar := tqdm(t_values, desc="Sweep", disable=not SHOW_PROGRESS)):
        key = _t_key(t)
        if key in reports:
            continue
        pbar.set_postfix_str(f"t={t:.3g}")
        try:
            problem = build_problem(config.for_t(t), base, greens_cache=greens_cache)
            report, u = solve_point(problem)
            reports[key] = report
            if save_fields:
                dump_field(u, os.path.join(output_dir, f"u_t{key}.pfld"))
        except BubblingError as exc:
            logger.warning("Sweep point t=%s failed: %s", key, exc)
            failures[key] = exc.to_dict()
        # Only finished points go into the checkpoint so failures are retried on resume
        write_json({"reports": {k: r.model_dump() for k, r in reports.items()}}, checkpoint_path)
        logger.debug("Progress saved to %s", checkpoint_path)

    fits = fit_sweep(reports)
    result = SweepResult(t_values=t_values, reports=reports, failures=failures, fits=fits)
    rows = [reports[_t_key(t)].row() if _t_key(t) in reports else {"t": t, "status": "failed"} for t in t_values]
    write_csv(rows, CSV_COLUMNS, os.path.join(output_dir, "sweep.csv"))
    write_json({"config": config_summary(config), **result.to_dict()}, os.path.join(output_dir, "sweep_report.json"))
    logger.info("Sweep finished: %d/%d points succeeded", len(reports), len(t_values))
    return result
