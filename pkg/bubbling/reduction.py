"""
Reduction Module

This module handles the projected linear theory around the ansatz and the
nonlinear solve built on it:

- the radial cutoff χ, the approximate kernels Ŷ_i = χ Y_i(Λ(x - tq)) and
  Z_i = -ΔŶ_i + 8Λ² χ Ŷ_i / (1 + Λ²|x - tq|²)², i = 1, 2
- the weighted norms X and Y and the projection Q onto {∫ g Ŷ_i = 0}
- the linearized operator L and the bordered solve of
  Lφ = g + c₁Z₁ + c₂Z₂, ∫φZ_i = 0, ∫φ = 0
- the fixed-point iteration for φ_{t,q} and the Newton adjustment of q that
  drives the multipliers c_i to zero

The frame carries only the two translation kernels.
"""

import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.integrate import quad
from scipy.sparse.linalg import LinearOperator, gmres
from tqdm import tqdm

from .bubble_ansatz import (
    Ansatz,
    BubbleParams,
    CollapseProblem,
    assemble_ansatz,
    density,
    derive_params,
)
from .config import BALL_CONSTANT, SHOW_PROGRESS
from .errors import (
    ConfigError,
    ContractionDiverged,
    LinearNoConvergence,
    NonZeroMean,
    OutsideBall,
    QAdjustDiverged,
)
from .liouville import kernel_value
from .torus_spectral import (
    PeriodicField,
    inverse_laplacian_array,
    laplacian_array,
    laplacian_norm,
    torus_displacement,
)

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
REFINEMENTS = 3
CONSTRAINT_TOL = 1e-9
JACOBIAN_COND_LIMIT = 1e8


def smoothstep(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic smoothstep S(u) = 6u⁵ - 15u⁴ + 10u³ on [0, 1] with S', S''."""
    u = np.clip(u, 0.0, 1.0)
    value = u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)
    first = 30.0 * u * u * (1.0 - u) ** 2
    second = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    return value, first, second


def cutoff_profile(s: np.ndarray, Gamma: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Radial cutoff χ̄(s) in bubble coordinates with its first two s-derivatives.

    χ̄ = 1 for s ≤ Γ/2, 0 for s ≥ Γ, C² in between.
    """
    half = 0.5 * Gamma
    value, first, second = smoothstep((Gamma - s) / half)
    return value, -first / half, second / half ** 2


def cutoff_energy(Gamma: float) -> float:
    """
    ∫ |∇(χ̄Y_i)|² + 8χ̄³Y_i²/(1+|z|²)² dz over the plane, by radial quadrature.

    Equals ∫ Z_i Ŷ_i dx for either translation kernel; tends to 4π/3 as Γ → ∞.
    """
    def integrand(s: float) -> float:
        chi, dchi, _ = (float(v) for v in cutoff_profile(np.array(s), Gamma))
        f = chi * s / (1.0 + s * s)
        df = dchi * s / (1.0 + s * s) + chi * (1.0 - s * s) / (1.0 + s * s) ** 2
        ratio = chi / (1.0 + s * s)
        return math.pi * s * (df * df + ratio * ratio + 8.0 * chi ** 3 * s * s / (1.0 + s * s) ** 4)

    head, _ = quad(integrand, 0.0, 0.5 * Gamma, epsabs=1e-13, epsrel=1e-12, limit=200)
    tail, _ = quad(integrand, 0.5 * Gamma, Gamma, epsabs=1e-13, epsrel=1e-12, limit=200)
    return head + tail


class ReductionFrame(BaseModel):
    """Cutoff, approximate kernels, Gram matrix and norm data at one (t, q)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: BubbleParams
    rho: float
    p: float
    alpha: float
    chi: PeriodicField
    hatY: Tuple[np.ndarray, np.ndarray]
    Z: Tuple[np.ndarray, np.ndarray]
    Z_mean_correction: Tuple[float, float]
    gram: np.ndarray
    energy_norms: Tuple[float, float]
    schur: np.ndarray
    nu: np.ndarray
    s: np.ndarray
    inner: np.ndarray
    outer: np.ndarray

    @property
    def n(self) -> int:
        return self.chi.grid.n

    def report(self) -> Dict[str, object]:
        return {
            "gram": self.gram.tolist(),
            "energy_norms": list(self.energy_norms),
            "Z_mean_correction": list(self.Z_mean_correction),
            "kernels": 2,
        }


def build_frame(problem: CollapseProblem, ansatz: Ansatz, p: float, alpha: float) -> ReductionFrame:
    """
    Build the reduction frame from closed-form radial derivatives.

    Args:
        problem: Collapse problem
        ansatz: Assembled ansatz at (t, q)
        p: Outer Lebesgue exponent, in (1, 2]
        alpha: Inner weight exponent, in (0, min(1/2, 4(p-1)/p))

    Returns:
        The ReductionFrame

    Raises:
        ConfigError: If (p, α) is out of range
    """
    if not 1.0 < p <= 2.0:
        raise ConfigError(f"p = {p} must lie in (1, 2]")
    if not 0.0 < alpha < min(0.5, 4.0 * (p - 1.0) / p):
        raise ConfigError(f"alpha = {alpha} must lie in (0, min(1/2, 4(p-1)/p))")
    params = ansatz.params
    Lam, Gamma = params.Lambda, params.Gamma
    tq = problem.centre(params.q)
    dx1, dx2 = torus_displacement(problem.grid, tq)
    z1, z2 = Lam * dx1, Lam * dx2
    s = np.hypot(z1, z2)
    chi, dchi, d2chi = cutoff_profile(s, Gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        dchi_over_s = np.where(s > 0.0, dchi / np.where(s > 0.0, s, 1.0), 0.0)
    lap_chi = d2chi + dchi_over_s
    denom = (1.0 + s * s)
    hatY: List[np.ndarray] = []
    Z: List[np.ndarray] = []
    corrections: List[float] = []
    for i, zi in ((1, z1), (2, z2)):
        Yi = kernel_value(i, np.stack([z1, z2], axis=-1))
        grad_dot = dchi_over_s * zi * (1.0 - s * s) / denom ** 2
        Zi = Lam ** 2 * (8.0 * chi * (1.0 + chi) * Yi / denom ** 2 - 2.0 * grad_dot - Yi * lap_chi)
        correction = float(Zi.mean())
        Zi = Zi - correction
        hatY.append(chi * Yi)
        Z.append(Zi)
        corrections.append(correction)

    gram = np.array([[float((Z[j] * hatY[i]).mean()) for j in range(2)] for i in range(2)])
    energy = cutoff_energy(Gamma)
    inv_Z = [inverse_laplacian_array(Zj) for Zj in Z]
    schur = -np.array([[float((Z[i] * inv_Z[j]).mean()) for j in range(2)] for i in range(2)])
    d = ansatz.distance
    radius = params.t * params.R0
    frame = ReductionFrame(
        params=params, rho=problem.rho, p=p, alpha=alpha,
        chi=PeriodicField(grid=problem.grid, values=chi),
        hatY=(hatY[0], hatY[1]), Z=(Z[0], Z[1]),
        Z_mean_correction=(corrections[0], corrections[1]),
        gram=gram, energy_norms=(energy, energy), schur=schur,
        nu=density(problem, ansatz.ustar.values), s=s,
        inner=d < radius, outer=d >= 0.5 * radius,
    )
    logger.info("Frame t=%.4g: gram diag=(%.6f, %.6f) energy=%.6f off-diag=%.2e",
                params.t, gram[0, 0], gram[1, 1], energy, max(abs(gram[0, 1]), abs(gram[1, 0])))
    return frame


def _require_mean_zero(values: np.ndarray, what: str, tol: float = 1e-9) -> None:
    mean = float(values.mean())
    scale = max(1.0, float(np.abs(values).max()))
    if abs(mean) > tol * scale:
        raise NonZeroMean(f"{what} must have mean zero, got {mean:.3e}", {"mean": mean, "scale": scale})


def _inner_l2(values: np.ndarray, weight: np.ndarray, frame: ReductionFrame) -> float:
    """L²(B_Γ, dz) norm of a field given on x-nodes: dz = Λ² dx."""
    cell = 1.0 / frame.n ** 2
    mask = frame.inner
    return math.sqrt(frame.params.Lambda ** 2 * float(((values[mask] * weight[mask]) ** 2).sum()) * cell)


def _outer_lp(values: np.ndarray, frame: ReductionFrame) -> float:
    cell = 1.0 / frame.n ** 2
    return float((np.abs(values[frame.outer]) ** frame.p).sum() * cell) ** (1.0 / frame.p)


def norm_X_terms(phi: np.ndarray, frame: ReductionFrame) -> Dict[str, float]:
    """
    The four parts of the X-norm.

    Raises:
        NonZeroMean: If φ is not mean-zero
    """
    phi = np.asarray(phi)
    _require_mean_zero(phi, "phi")
    lap = laplacian_array(phi)
    growth = (1.0 + frame.s) ** (1.0 + 0.5 * frame.alpha)
    decay = (1.0 + frame.s) ** (-1.0 - 0.5 * frame.alpha)
    return {
        "inner_laplacian": _inner_l2(lap / frame.params.Lambda ** 2, growth, frame),
        "inner_value": _inner_l2(phi, decay, frame),
        "outer_laplacian": _outer_lp(lap, frame),
        "outer_value": _outer_lp(phi, frame),
    }


def norm_X(phi: np.ndarray, frame: ReductionFrame) -> float:
    """
    ‖Δ_zφ̄ (1+|z|)^{1+α/2}‖_{L²(B_Γ)} + ‖φ̄ ρ(z)‖_{L²(B_Γ)} + ‖Δφ‖_{L^p(out)} + ‖φ‖_{L^p(out)}.

    Raises:
        NonZeroMean: If φ is not mean-zero
    """
    return sum(norm_X_terms(phi, frame).values())


def norm_Y(g: np.ndarray, frame: ReductionFrame) -> float:
    """‖t²e^{-λ} ḡ (1+|z|)^{1+α/2}‖_{L²(B_Γ)} + ‖g‖_{L^p(out)}."""
    g = np.asarray(g)
    _require_mean_zero(g, "g")
    params = frame.params
    scale = params.t ** 2 * math.exp(-params.lam)
    growth = (1.0 + frame.s) ** (1.0 + 0.5 * frame.alpha)
    return _inner_l2(scale * g, growth, frame) + _outer_lp(g, frame)


def project_Q(g: np.ndarray, frame: ReductionFrame) -> Tuple[np.ndarray, Tuple[float, float]]:
    """
    Remove the Z-components of g so that ∫ (Qg) Ŷ_i = 0.

    Returns:
        (Qg, (c_1, c_2)) with Qg = g - Σ c_i Z_i
    """
    g = np.asarray(g)
    _require_mean_zero(g, "g")
    rhs = np.array([float((g * frame.hatY[i]).mean()) for i in range(2)])
    c = np.linalg.solve(frame.gram, rhs)
    projected = g - c[0] * frame.Z[0] - c[1] * frame.Z[1]
    return projected, (float(c[0]), float(c[1]))


def apply_L(phi: np.ndarray, frame: ReductionFrame) -> np.ndarray:
    """Lφ = Δφ + ρν(φ - ∫νφ) with ν the ansatz density; constants are annihilated."""
    phi = np.asarray(phi)
    nu = frame.nu
    return laplacian_array(phi) + frame.rho * nu * (phi - float((nu * phi).mean()))


class ReducedSolveResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    phi: PeriodicField
    c: Tuple[float, float]
    norms: Dict[str, float]
    linear_iters: int
    bound_ratio: float
    residual: float
    constraint: float


def _bordered_operator(frame: ReductionFrame) -> LinearOperator:
    n = frame.n
    size = n * n
    Z0, Z1 = frame.Z

    def matvec(x: np.ndarray) -> np.ndarray:
        phi = x[:size].reshape(n, n)
        c = x[size:]
        top = apply_L(phi, frame) - c[0] * Z0 - c[1] * Z1
        top -= top.mean()
        bottom = -np.array([float((Z0 * phi).mean()), float((Z1 * phi).mean())])
        return np.concatenate([top.ravel(), bottom])

    return LinearOperator((size + 2, size + 2), matvec=matvec, dtype=float)


def _block_preconditioner(frame: ReductionFrame) -> LinearOperator:
    n = frame.n
    size = n * n
    schur_inv = np.linalg.inv(frame.schur)

    def apply(x: np.ndarray) -> np.ndarray:
        top = inverse_laplacian_array(x[:size].reshape(n, n))
        return np.concatenate([top.ravel(), schur_inv @ x[size:]])

    return LinearOperator((size + 2, size + 2), matvec=apply, dtype=float)


def solve_reduced(
    g: np.ndarray,
    frame: ReductionFrame,
    lin_tol: float = 1e-9,
    lin_maxiter: int = 400,
    x0: Optional[np.ndarray] = None,
) -> ReducedSolveResult:
    """
    Solve Lφ = g + c₁Z₁ + c₂Z₂ with ∫φZ_i = 0 and ∫φ = 0.

    The bordered system is solved by GMRES with the block preconditioner
    diag(Δ^{-1}, S^{-1}), S = -⟨Z_i, Δ^{-1}Z_j⟩. The true max-norm residual is
    checked afterwards and GMRES is restarted from its own iterate up to three
    times.

    Args:
        g: Mean-zero right-hand side
        frame: Reduction frame
        lin_tol: Target max-norm residual relative to max(1, ‖g‖∞)
        lin_maxiter: Krylov iteration budget per attempt
        x0: Optional starting φ

    Returns:
        ReducedSolveResult

    Raises:
        NonZeroMean: If g is not mean-zero
        LinearNoConvergence: If the residual target is missed
    """
    g = np.asarray(g, dtype=float)
    _require_mean_zero(g, "g")
    n = frame.n
    size = n * n
    operator = _bordered_operator(frame)
    precond = _block_preconditioner(frame)
    rhs = np.concatenate([g.ravel(), np.zeros(2)])
    x = np.zeros(size + 2)
    if x0 is not None:
        start = np.asarray(x0, dtype=float)
        x[:size] = (start - start.mean()).ravel()
    linear_iters = 0

    def count(_):
        nonlocal linear_iters
        linear_iters += 1

    target = lin_tol * max(1.0, float(np.abs(g).max()))
    restart = min(lin_maxiter, 100)
    cycles = max(1, lin_maxiter // restart)
    z_sizes = [math.sqrt(float((Zi * Zi).mean())) for Zi in frame.Z]
    rtol = lin_tol
    residual = constraint = math.inf
    for attempt in range(REFINEMENTS + 1):
        x, info = gmres(operator, rhs, x0=x, rtol=rtol, atol=0.0, restart=restart, maxiter=cycles,
                        M=precond, callback=count, callback_type="pr_norm")
        if info < 0:
            raise LinearNoConvergence("GMRES breakdown in the bordered solve", {"info": info})
        phi = x[:size].reshape(n, n)
        phi = phi - phi.mean()
        c = x[size:]
        defect = apply_L(phi, frame) - c[0] * frame.Z[0] - c[1] * frame.Z[1] - g
        residual = float(np.abs(defect).max())
        floor = 64.0 * EPS * laplacian_norm(n) * float(np.abs(phi).max())
        phi_size = math.sqrt(float((phi * phi).mean()))
        constraint = max(abs(float((frame.Z[i] * phi).mean())) / (phi_size * z_sizes[i]) if phi_size > 0 else 0.0
                         for i in range(2))
        logger.debug("Bordered solve attempt %d: residual=%.3e target=%.3e floor=%.3e constraint=%.2e iters=%d",
                     attempt, residual, target, floor, constraint, linear_iters)
        if residual <= target + floor and constraint <= CONSTRAINT_TOL:
            break
        rtol *= 0.01
    else:
        raise LinearNoConvergence(
            f"bordered solve residual {residual:.3e} (target {target:.3e}), constraint {constraint:.2e}",
            {"residual": residual, "target": target, "constraint": constraint, "iterations": linear_iters},
        )

    x_norm = norm_X(phi, frame)
    y_norm = norm_Y(g, frame)
    log_t = abs(math.log(frame.params.t))
    bound_ratio = (float(np.abs(phi).max()) + x_norm) / (log_t * y_norm) if y_norm > 0 else 0.0
    return ReducedSolveResult(
        phi=PeriodicField(grid=frame.chi.grid, values=phi),
        c=(float(c[0]), float(c[1])),
        norms={"X_norm": x_norm, "Y_norm": y_norm},
        linear_iters=linear_iters,
        bound_ratio=bound_ratio,
        residual=residual,
        constraint=constraint,
    )


def full_residual(problem: CollapseProblem, u: np.ndarray) -> np.ndarray:
    """Δu + ρ(h e^{u - G_t} / ∫ h e^{u - G_t} - 1)."""
    u = np.asarray(u)
    return laplacian_array(u) + problem.rho * (density(problem, u) - 1.0)


def relative_residual(problem: CollapseProblem, u: np.ndarray) -> float:
    """Max-norm of full_residual relative to max(1, ρ‖ν‖∞)."""
    nu = density(problem, np.asarray(u))
    scale = max(1.0, problem.rho * float(nu.max()))
    return float(np.abs(full_residual(problem, u)).max()) / scale


def residual_g(phi: np.ndarray, problem: CollapseProblem, ansatz: Ansatz, frame: ReductionFrame) -> np.ndarray:
    """
    g(φ) = -ΔU + ρ - ρν_{U+φ} + ρν(φ - ∫νφ), so that Lφ - g(φ) is the full residual of U + φ.
    """
    phi = np.asarray(phi)
    _require_mean_zero(phi, "phi")
    nu_phi = density(problem, ansatz.U.values + phi)
    nu = frame.nu
    g = (-ansatz.laplacian_U.values + problem.rho - problem.rho * nu_phi
         + problem.rho * nu * (phi - float((nu * phi).mean())))
    return g - g.mean()


def nonlinear_map_defect(problem: CollapseProblem, ansatz: Ansatz, frame: ReductionFrame,
                         directions: int = 5, step: float = 1e-6, seed: int = 0) -> float:
    """Largest relative gap between centred differences of the full residual at U and apply_L."""
    rng = np.random.default_rng(seed)
    n = frame.n
    axis = np.arange(n) / n
    worst = 0.0
    for _ in range(directions):
        k1, k2 = rng.integers(1, 5, size=2)
        phase = rng.uniform(0.0, 2.0 * math.pi, size=2)
        v = np.outer(np.cos(2.0 * math.pi * k1 * axis + phase[0]), np.cos(2.0 * math.pi * k2 * axis + phase[1]))
        v -= v.mean()
        fd = (full_residual(problem, ansatz.U.values + step * v)
              - full_residual(problem, ansatz.U.values - step * v)) / (2.0 * step)
        exact = apply_L(v, frame)
        worst = max(worst, float(np.abs(fd - exact).max() / np.abs(exact).max()))
    return worst


class ContractionResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    phi: PeriodicField
    c: Tuple[float, float]
    history: Tuple[float, ...]
    factors: Tuple[float, ...]
    iterations: int
    ball_radius: float
    ball_norm: float
    ball_constant: float = BALL_CONSTANT
    ball_terms: Dict[str, float] = {}
    in_ball: bool
    last_solve: ReducedSolveResult


def ball_radius(t: float, p: float) -> float:
    """t^{2/p} |ln t|²."""
    return t ** (2.0 / p) * math.log(t) ** 2


def contraction_solve(
    problem: CollapseProblem,
    ansatz: Ansatz,
    frame: ReductionFrame,
    fp_tol: float = 1e-10,
    max_fp_iter: int = 40,
    lin_tol: float = 1e-9,
    lin_maxiter: int = 400,
    ball_constant: float = BALL_CONSTANT,
) -> ContractionResult:
    """
    Fixed-point iteration φ ← solve_reduced(Q g(φ)).

    The reported multipliers belong to Lφ = g(φ) + Σ c_i Z_i, i.e. the
    bordered multipliers minus the projection coefficients. The converged φ
    must satisfy ‖φ‖∞ + ‖φ‖_X ≤ ball_constant · t^{2/p}|ln t|².

    Raises:
        ContractionDiverged: If ‖φ‖∞ leaves twice the ball radius or the
            iteration budget runs out
        OutsideBall: If the converged φ violates the ball bound
    """
    params = ansatz.params
    radius = ball_radius(params.t, frame.p)
    phi = np.zeros((frame.n, frame.n))
    history: List[float] = []
    factors: List[float] = []
    result: Optional[ReducedSolveResult] = None
    c_total = (0.0, 0.0)
    for step in (pbar := tqdm(range(max_fp_iter), desc=f"Contraction t={params.t:.3g}",
                              disable=not SHOW_PROGRESS, leave=False)):
        g = residual_g(phi, problem, ansatz, frame)
        projected, c_g = project_Q(g, frame)
        result = solve_reduced(projected, frame, lin_tol=lin_tol, lin_maxiter=lin_maxiter, x0=phi)
        new_phi = result.phi.values
        change = float(np.abs(new_phi - phi).max())
        if history:
            factors.append(change / history[-1] if history[-1] > 0 else 0.0)
        history.append(change)
        phi = new_phi
        c_total = (result.c[0] - c_g[0], result.c[1] - c_g[1])
        pbar.set_postfix_str(f"dphi {change:.2e}, c ({c_total[0]:.2e}, {c_total[1]:.2e})")
        logger.debug("Contraction step %d: |dphi|=%.3e |phi|=%.3e", step, change, float(np.abs(phi).max()))
        sup = float(np.abs(phi).max())
        if sup > 2.0 * radius:
            raise ContractionDiverged(
                f"|phi| = {sup:.3e} left twice the ball radius {radius:.3e}",
                {"step": step, "sup": sup, "radius": radius, "history": history},
            )
        if change < fp_tol:
            break
    else:
        raise ContractionDiverged(
            f"no fixed point within {max_fp_iter} iterations (last change {history[-1] if history else math.nan:.3e})",
            {"history": history},
        )
    terms = norm_X_terms(phi, frame)
    sup = float(np.abs(phi).max())
    ball_norm = sup + sum(terms.values())
    logger.info("Contraction t=%.4g converged in %d steps: |phi|=%.3e ball %.3e/%.3e c=(%.3e, %.3e)",
                params.t, len(history), sup, ball_norm, radius, *c_total)
    if ball_norm > ball_constant * radius:
        raise OutsideBall(
            f"|phi|_inf + |phi|_X = {ball_norm:.3e} exceeds {ball_constant:g} x {radius:.3e}",
            {"ball_norm": ball_norm, "radius": radius, "ball_constant": ball_constant,
             "sup": sup, "terms": terms, "history": history},
        )
    return ContractionResult(
        phi=PeriodicField(grid=frame.chi.grid, values=phi), c=c_total, history=tuple(history),
        factors=tuple(factors), iterations=len(history), ball_radius=radius, ball_norm=ball_norm,
        ball_constant=ball_constant, ball_terms=terms, in_ball=True, last_solve=result,
    )


class ReducedState(BaseModel):
    """Ansatz, frame and fixed point at one bubble location."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: BubbleParams
    ansatz: Ansatz
    frame: ReductionFrame
    contraction: ContractionResult

    @property
    def u(self) -> np.ndarray:
        return self.ansatz.U.values + self.contraction.phi.values


def solve_at(problem: CollapseProblem, q) -> ReducedState:
    """Ansatz, frame and contraction at one q with the problem's configuration."""
    config = problem.config
    params = derive_params(problem, q)
    ansatz = assemble_ansatz(problem, params)
    frame = build_frame(problem, ansatz, config.p, config.alpha)
    contraction = contraction_solve(problem, ansatz, frame, fp_tol=config.fp_tol, max_fp_iter=config.max_fp_iter,
                                    lin_tol=config.lin_tol, lin_maxiter=config.lin_maxiter,
                                    ball_constant=config.ball_constant)
    return ReducedState(params=params, ansatz=ansatz, frame=frame, contraction=contraction)


class AdjustResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    q_star: Tuple[float, float]
    c: Tuple[float, float]
    iterations: int
    history: Tuple[Tuple[float, float, float], ...]
    jacobian: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None
    jacobian_cond: Optional[float] = None
    jacobian_singular: bool = False
    state: ReducedState


def adjust_q(problem: CollapseProblem, q0=(0.0, 0.0), c_tol: float = 1e-8, max_outer: int = 12) -> AdjustResult:
    """
    Newton iteration on q ↦ (c_{t,q,1}, c_{t,q,2}) with a forward-difference Jacobian.

    Args:
        problem: Collapse problem
        q0: Starting location, inside B_{t|ln t|}
        c_tol: Stop when max |c_i| < c_tol
        max_outer: Newton budget

    Returns:
        AdjustResult with the final state

    Raises:
        ConfigError: If q0 is outside B_{t|ln t|}
        QAdjustDiverged: If the budget is exhausted
    """
    t = problem.t
    admissible = t * abs(math.log(t))
    q = np.asarray(q0, dtype=float)
    if float(np.hypot(*q)) >= admissible:
        raise ConfigError(f"|q0| = {float(np.hypot(*q)):.4g} must be below t|ln t| = {admissible:.4g}")
    fd_step = t / 100.0
    history: List[Tuple[float, float, float]] = []
    jacobian = None
    cond = None
    singular = False
    for outer in range(max_outer + 1):
        state = solve_at(problem, tuple(q))
        c = np.array(state.contraction.c)
        history.append((float(q[0]), float(q[1]), float(np.abs(c).max())))
        logger.info("adjust_q step %d: q=(%.4e, %.4e) |c|=%.3e", outer, q[0], q[1], float(np.abs(c).max()))
        if float(np.abs(c).max()) < c_tol:
            return AdjustResult(q_star=(float(q[0]), float(q[1])), c=(float(c[0]), float(c[1])),
                                iterations=outer, history=tuple(history),
                                jacobian=None if jacobian is None else tuple(map(tuple, jacobian.tolist())),
                                jacobian_cond=cond, jacobian_singular=singular, state=state)
        if outer == max_outer:
            break
        jacobian = np.empty((2, 2))
        for j in range(2):
            shifted = q.copy()
            shifted[j] += fd_step
            jacobian[:, j] = (np.array(solve_at(problem, tuple(shifted)).contraction.c) - c) / fd_step
        cond = float(np.linalg.cond(jacobian))
        singular = cond > JACOBIAN_COND_LIMIT
        if singular:
            logger.warning("adjust_q: finite-difference Jacobian is near singular (cond %.3e)", cond)
            step = np.linalg.lstsq(jacobian, c, rcond=None)[0]
        else:
            step = np.linalg.solve(jacobian, c)
        q = q - step
        size = float(np.hypot(*q))
        if size >= admissible:
            q *= 0.9 * admissible / size
            logger.warning("adjust_q: step left B_{t|ln t|}; pulled back to |q| = %.4g", 0.9 * admissible)
    raise QAdjustDiverged(
        f"multipliers still {history[-1][2]:.3e} after {max_outer} Newton steps",
        {"history": history, "jacobian_cond": cond},
    )


def kernel_mass_diagnostics(phi: np.ndarray, frame: ReductionFrame) -> Dict[str, float]:
    """
    Scaled kernel masses of ψ = φ - ∫νφ over B_Γ:

    m0 = ∫(-Δ_zψ) dz, m1 = ∫ψ/(1+|z|²)² dz, m2 = ∫16ψχ̄(1-|z|²)/(1+|z|²)³ dz,
    each also reported multiplied by |ln t|.
    """
    phi = np.asarray(phi)
    params = frame.params
    cell = 1.0 / frame.n ** 2
    mask = frame.inner
    psi = phi - float((frame.nu * phi).mean())
    s2 = frame.s[mask] ** 2
    Lam2 = params.Lambda ** 2
    m0 = -float(laplacian_array(phi)[mask].sum()) * cell
    m1 = Lam2 * float((psi[mask] / (1.0 + s2) ** 2).sum()) * cell
    chi = frame.chi.values[mask]
    m2 = Lam2 * float((16.0 * psi[mask] * chi * (1.0 - s2) / (1.0 + s2) ** 3).sum()) * cell
    log_t = abs(math.log(params.t))
    return {"m0": m0, "m1": m1, "m2": m2,
            "m0_scaled": log_t * abs(m0), "m1_scaled": log_t * abs(m1), "m2_scaled": log_t * abs(m2)}
