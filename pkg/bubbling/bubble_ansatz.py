"""
Bubble Ansatz Module

This module handles the approximate solution U_{t,q} built around a Liouville
bubble centred at tq: the rescaled weight H_{t,q}, the derived constants
(λ, C, Λ, Γ, θ, 𝔅), the two-piece profile u*_{t,q} glued C¹ across the
circle |x - tq| = tR0, and its mass bookkeeping.

All closed forms are evaluated at exact node coordinates; the spectral
representation is only used for w and for Laplacians.
"""

import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .base_state import BaseSolution, WeightSpec, assemble_h, base_mass, h_values
from .config import MIN_GRID_N, ProblemConfig
from .errors import ConfigError, UnderResolved
from .greens import CollapsePair, GreenEvaluator
from .torus_spectral import PeriodicField, interpolate_many, laplacian_array, point_distance, torus_distance

logger = logging.getLogger(__name__)

EIGHT_PI = 8.0 * math.pi
CELLS_PER_CORE = 8


class CollapseProblem:
    """
    Everything fixed once ρ, t, the grid and the base state are known.

    Holds h, the resampled base solution, the factorized singular weight
    d(·,te)² d(·,-te)² e^{-R_t} and the constant K = ρ/(ρ-8π) ∫ h e^w.
    """

    def __init__(self, config: ProblemConfig, greens: GreenEvaluator, spec: WeightSpec,
                 base: BaseSolution, t: Optional[float] = None):
        self.config = config
        self.greens = greens
        self.spec = spec
        self.grid = greens.grid
        self.t = config.t if t is None else t
        self.R0 = config.R0
        self.r0 = config.r0
        self.pair = CollapsePair(t=self.t, e=config.e_dir)
        self.rho = base.rho
        self.base = base if base.w.grid.n == self.grid.n else base.resampled(self.grid.n)
        self.w = self.base.w
        self.h = assemble_h(spec, greens)
        self.mass_w = base_mass(self.base, self.h)
        self.log_K = math.log(self.rho / (self.rho - EIGHT_PI) * self.mass_w)
        self.singular_weight = greens.singular_weight(self.pair).values
        self.weight = self.h.values * self.singular_weight
        self.robin = greens.robin
        logger.debug("Collapse problem t=%.4g n=%d log K=%.6f", self.t, self.grid.n, self.log_K)

    def w_at(self, points: np.ndarray) -> np.ndarray:
        return interpolate_many(self.w, np.atleast_2d(points))

    def centre(self, q) -> np.ndarray:
        return self.t * np.asarray(q, dtype=float)


class BubbleParams(BaseModel):
    """Constants of the bubble at (t, q); `lam` is λ_{t,q}."""

    model_config = ConfigDict(frozen=True)

    t: float
    q: Tuple[float, float]
    lam: float
    C: float
    Lambda: float
    Gamma: float
    theta: float
    Bconst: float
    R0: float
    H_q: float
    log_K: float

    def to_report(self) -> Dict[str, float]:
        return {
            "t": self.t, "q": list(self.q), "lambda": self.lam, "C": self.C,
            "Lambda": self.Lambda, "Gamma": self.Gamma, "theta": self.theta,
            "Bconst": self.Bconst,
        }


class Ansatz(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: BubbleParams
    ustar: PeriodicField
    U: PeriodicField
    Aconst: float
    mean_ustar: float
    laplacian_U: PeriodicField
    inner: np.ndarray
    distance: np.ndarray


class HField:
    """Evaluator of H_{t,q}(y) in vortex-scale coordinates y = x/t."""

    def __init__(self, problem: CollapseProblem, q):
        self.problem = problem
        self.q = (float(q[0]), float(q[1]))
        tq = problem.centre(self.q)
        self.w_tq = float(problem.w_at(tq)[0])

    def __call__(self, y) -> np.ndarray:
        problem = self.problem
        t = problem.t
        x = t * np.atleast_2d(np.asarray(y, dtype=float))
        tq = problem.centre(self.q)
        # |y - e|² |y + e|² e^{-R_t(ty)} = sw(ty) / t⁴
        polynomial = problem.greens.singular_weight_values(x, problem.pair) / t ** 4
        exponent = (EIGHT_PI * problem.greens.regular_values(x, tq) - EIGHT_PI * problem.robin
                    + problem.w_at(x) - self.w_tq)
        return h_values(problem.spec, x, problem.greens) * polynomial * np.exp(exponent)

    def at_q(self) -> float:
        return float(self(np.array(self.q))[0])


def H_field(problem: CollapseProblem, q) -> HField:
    """
    Build the H_{t,q} evaluator.

    Raises:
        ConfigError: If |q| ≥ r0
    """
    if math.hypot(q[0], q[1]) >= problem.r0:
        raise ConfigError(f"|q| = {math.hypot(q[0], q[1]):.4g} must be smaller than r0 = {problem.r0}")
    return HField(problem, q)


def derive_params(problem: CollapseProblem, q) -> BubbleParams:
    """
    λ_{t,q} and the constants derived from it.

    λ = -2 ln t - 2 ln(ρ H(q)/8) - 8πR(tq,tq) - w(tq) + ln K,
    C = sqrt(8/(ρ H(q))), Λ = e^{λ/2}/(C t), Γ = Λ t R0, θ = 1/(1+Γ²),
    𝔅 = -4 θ ln(tR0) + 2 ln(Γ²/(1+Γ²)).
    """
    H = H_field(problem, q)
    H_q = H.at_q()
    t, rho = problem.t, problem.rho
    lam = (-2.0 * math.log(t) - 2.0 * math.log(rho * H_q / 8.0) - EIGHT_PI * problem.robin
           - H.w_tq + problem.log_K)
    C = math.sqrt(8.0 / (rho * H_q))
    Lambda = math.exp(0.5 * lam) / (C * t)
    Gamma = math.exp(0.5 * lam) * problem.R0 / C
    theta = 1.0 / (1.0 + Gamma ** 2)
    Bconst = -4.0 * math.log(t * problem.R0) * theta + 2.0 * math.log(Gamma ** 2 / (1.0 + Gamma ** 2))
    params = BubbleParams(t=t, q=(float(q[0]), float(q[1])), lam=lam, C=C, Lambda=Lambda, Gamma=Gamma,
                          theta=theta, Bconst=Bconst, R0=problem.R0, H_q=H_q, log_K=problem.log_K)
    logger.debug("Bubble params t=%.4g q=(%.3g, %.3g): lambda=%.6f Lambda=%.4g Gamma=%.4g theta=%.3e",
                 t, q[0], q[1], lam, Lambda, Gamma, theta)
    return params


def required_grid_n(Lambda: float, max_grid_n: int) -> int:
    """
    Smallest power of two (≥ 16) giving at least 8 cells across the core width 1/Λ.

    Raises:
        UnderResolved: If that grid exceeds max_grid_n
    """
    n = MIN_GRID_N
    while n < CELLS_PER_CORE * Lambda:
        n *= 2
    if n > max_grid_n:
        raise UnderResolved(
            f"core width 1/Lambda = {1.0 / Lambda:.3e} needs n = {n} > max_grid_n = {max_grid_n}",
            {"Lambda": Lambda, "required_n": n, "max_grid_n": max_grid_n},
        )
    return n


def check_resolution(params: BubbleParams, n: int) -> None:
    if 1.0 / params.Lambda < CELLS_PER_CORE / n:
        raise UnderResolved(
            f"1/Lambda = {1.0 / params.Lambda:.3e} is below {CELLS_PER_CORE}/n = {CELLS_PER_CORE / n:.3e}",
            {"Lambda": params.Lambda, "n": n},
        )


def _common_shift(problem: CollapseProblem, params: BubbleParams, w_minus_wtq):
    t = params.t
    return params.lam - 6.0 * math.log(t) - EIGHT_PI * problem.robin + w_minus_wtq + params.log_K


def inner_branch(problem: CollapseProblem, params: BubbleParams, d, R_tq, w_minus_wtq):
    return (_common_shift(problem, params, w_minus_wtq) - 2.0 * np.log1p(params.Lambda ** 2 * d ** 2)
            + EIGHT_PI * R_tq * (1.0 - params.theta))


def outer_branch(problem: CollapseProblem, params: BubbleParams, G_tq, w_minus_wtq):
    t = params.t
    return (_common_shift(problem, params, w_minus_wtq) - 2.0 * math.log1p(params.Gamma ** 2)
            + EIGHT_PI * (G_tq + math.log(t * params.R0) / (2.0 * math.pi)) * (1.0 - params.theta))


def ustar_values(problem: CollapseProblem, params: BubbleParams, points: np.ndarray) -> np.ndarray:
    """u*_{t,q} at arbitrary points from the closed-form branches."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tq = problem.centre(params.q)
    d = point_distance(pts, tq)
    w_shift = problem.w_at(pts) - problem.w_at(tq)[0]
    inside = d < params.t * params.R0
    out = np.empty(pts.shape[0])
    if inside.any():
        R_tq = problem.greens.regular_values(pts[inside], tq)
        out[inside] = inner_branch(problem, params, d[inside], R_tq, w_shift[inside])
    if (~inside).any():
        G_tq = problem.greens.green_values(pts[~inside], tq)
        out[~inside] = outer_branch(problem, params, G_tq, w_shift[~inside])
    return out


def assemble_ansatz(problem: CollapseProblem, params: BubbleParams) -> Ansatz:
    """
    Sample u*_{t,q} on the grid and normalize it to U_{t,q}.

    Args:
        problem: Collapse problem on the target grid
        params: Constants from derive_params

    Returns:
        The Ansatz, including the spectral Laplacian of the sampled U

    Raises:
        UnderResolved: If the grid has fewer than 8 cells across 1/Λ
    """
    check_resolution(params, problem.grid.n)
    greens = problem.greens
    tq = problem.centre(params.q)
    d = torus_distance(problem.grid, tq)
    inner = d < params.t * params.R0
    w_shift = problem.w.values - problem.w_at(tq)[0]
    inner_values = inner_branch(problem, params, d, greens.regular_field(tq).values, w_shift)
    outer_values = outer_branch(problem, params, greens.green(tq).values, w_shift)
    ustar_values_grid = np.where(inner, inner_values, outer_values)
    mean_ustar = float(ustar_values_grid.mean())
    ustar = PeriodicField(grid=problem.grid, values=ustar_values_grid)
    U = PeriodicField(grid=problem.grid, values=ustar_values_grid - mean_ustar)

    lap = laplacian_array(U.values)

    peak = ustar_values_grid.max()
    total = float((problem.weight * np.exp(ustar_values_grid - peak)).mean())
    Aconst = math.exp(math.log(total) + peak - params.log_K) - 1.0
    logger.info("Ansatz t=%.4g: mean(u*)=%.3e A=%.3e Lambda=%.4g", params.t, mean_ustar, Aconst, params.Lambda)
    return Ansatz(params=params, ustar=ustar, U=U, Aconst=Aconst, mean_ustar=mean_ustar,
                  laplacian_U=PeriodicField(grid=problem.grid, values=lap), inner=inner, distance=d)


def density(problem: CollapseProblem, u: np.ndarray) -> np.ndarray:
    """Normalized density h e^{u - G_t} / ∫ h e^{u - G_t} in factorized form."""
    weight = problem.weight * np.exp(u - u.max())
    return weight / weight.mean()


def ansatz_mass_split(problem: CollapseProblem, ansatz: Ansatz,
                      exclusion_radius: Optional[float] = None) -> Dict[str, float]:
    """
    Mass bookkeeping of the ansatz density.

    Args:
        problem: Collapse problem
        ansatz: Assembled ansatz
        exclusion_radius: Outer density error is taken over d(x, tq) ≥ this
            radius (default 2tR0)

    Returns:
        inner_mass (ρ times the share in B_{tR0}(tq)), outer_density_error
        (NaN when no node lies beyond the exclusion radius)
        and Aconst
    """
    params = ansatz.params
    nu = density(problem, ansatz.ustar.values)
    inner_mass = problem.rho * float(nu[ansatz.inner].sum()) / nu.size
    radius = 2.0 * params.t * params.R0 if exclusion_radius is None else exclusion_radius
    far = ansatz.distance >= radius
    base_density = problem.h.values * np.exp(problem.w.values) / problem.mass_w
    target = (problem.rho - EIGHT_PI) / problem.rho * base_density
    if far.any():
        outer_error = float(np.abs(nu[far] - target[far]).max())
    else:
        logger.warning("no grid nodes lie beyond radius %.4g; outer density error undefined", radius)
        outer_error = math.nan
    return {"inner_mass": inner_mass, "outer_density_error": outer_error, "Aconst": ansatz.Aconst}


def inner_density_error(problem: CollapseProblem, ansatz: Ansatz) -> float:
    """
    Largest relative gap inside B_{tR0}(tq) between the normalized density and
    e^λ t^{-2} H(x/t) / ((1 + Λ²|x - tq|²)² (1 + 𝔄)).
    """
    params = ansatz.params
    t = params.t
    tq = problem.centre(params.q)
    nu = density(problem, ansatz.ustar.values)[ansatz.inner]
    d = ansatz.distance[ansatz.inner]
    exponent = (EIGHT_PI * problem.greens.regular_field(tq).values[ansatz.inner]
                - EIGHT_PI * problem.robin + problem.w.values[ansatz.inner] - problem.w_at(tq)[0])
    H = problem.h.values[ansatz.inner] * problem.singular_weight[ansatz.inner] / t ** 4 * np.exp(exponent)
    model = math.exp(params.lam) / t ** 2 * H / ((1.0 + params.Lambda ** 2 * d ** 2) ** 2 * (1.0 + ansatz.Aconst))
    usable = model > 1e-300
    return float(np.abs(nu[usable] / model[usable] - 1.0).max())


def interface_jumps(problem: CollapseProblem, params: BubbleParams, samples: int = 64) -> Dict[str, float]:
    """
    Value and radial-slope mismatch of the two branches on |x - tq| = tR0.

    Both branches are evaluated at the same exact points; slopes use centred
    differences of each branch across the circle.
    """
    tq = problem.centre(params.q)
    radius = params.t * params.R0
    angles = 2.0 * math.pi * np.arange(samples) / samples
    direction = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    step = 1e-6 * radius

    def branches(r: float) -> Tuple[np.ndarray, np.ndarray]:
        pts = tq + r * direction
        w_shift = problem.w_at(pts) - problem.w_at(tq)[0]
        inner = inner_branch(problem, params, np.full(samples, r),
                             problem.greens.regular_values(pts, tq), w_shift)
        outer = outer_branch(problem, params, problem.greens.green_values(pts, tq), w_shift)
        return inner, outer

    inner_0, outer_0 = branches(radius)
    inner_p, outer_p = branches(radius + step)
    inner_m, outer_m = branches(radius - step)
    slope_inner = (inner_p - inner_m) / (2.0 * step)
    slope_outer = (outer_p - outer_m) / (2.0 * step)
    return {
        "value_jump": float(np.abs(inner_0 - outer_0).max()),
        "slope_jump": float(np.abs(slope_inner - slope_outer).max()),
    }


def outer_deviation(problem: CollapseProblem, u: np.ndarray, centre, radius: float,
                    mass: float = EIGHT_PI) -> float:
    """sup over nodes with d(x, centre) ≥ radius of |u - w - mass·G(·, centre)|; NaN when no node qualifies."""
    d = torus_distance(problem.grid, centre)
    far = d >= radius
    if not far.any():
        logger.warning("no grid nodes lie beyond radius %.4g; outer deviation undefined", radius)
        return math.nan
    G = problem.greens.green(centre).values
    deviation = np.abs(u - problem.w.values - mass * G)
    return float(deviation[far].max())
