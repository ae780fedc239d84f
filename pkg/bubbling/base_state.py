"""
Base State Module

This module handles the regular part of the problem: the weight h built
from a positive closed-form h* and the extra vortices, the Newton solve of

    Δw + (ρ - 8π)(h e^w / ∫ h e^w - 1) = 0,    ∫ w = 0,

and the non-degeneracy margin of its linearization.
"""

import logging
import math
import os
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.sparse.linalg import LinearOperator, gmres, minres
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from .config import ProblemConfig
from .errors import LinearNoConvergence, NoConvergence, ResidualIncrease, RhoForbidden
from .field_io import dump_field, load_field, read_json, write_json
from .greens import FOUR_PI, GreenEvaluator
from .torus_spectral import (
    PeriodicField,
    inverse_laplacian_array,
    interpolate,
    laplacian_array,
    laplacian_norm,
    node_coordinates,
    point_displacement,
    resample,
    shifted_inverse_array,
    torus_distance,
)

logger = logging.getLogger(__name__)

EIGHT_PI = 8.0 * math.pi
MAX_HALVINGS = 30
MARGIN_SHIFT = 0.05
MARGIN_MAX_ITER = 80


class WeightSpec(BaseModel):
    """
    h = h* · exp(-4π Σ α_i G(·, q_i)), written as h* Π d(·, q_i)^{2α_i} e^{-4πα_i R(·, q_i)}.

    h* is either a positive constant ("const", (c,)) or
    exp(c1 cos 2πx1 + c2 cos 2πx2) ("cos", (c1, c2)).
    """

    model_config = ConfigDict(frozen=True)

    hstar: Tuple[str, Tuple[float, ...]] = ("const", (1.0,))
    vortices: Tuple[Tuple[float, float, int], ...] = ()

    @field_validator("hstar")
    @classmethod
    def _check_hstar(cls, hstar):
        kind, params = hstar
        if kind == "const" and len(params) == 1 and params[0] > 0:
            return hstar
        if kind == "cos" and len(params) == 2:
            return hstar
        raise ValueError("hstar must be ('const', (c,)) with c > 0 or ('cos', (c1, c2))")

    @model_validator(mode="after")
    def _check_vortices(self) -> "WeightSpec":
        for x1, x2, alpha in self.vortices:
            if int(alpha) != alpha or alpha < 1:
                raise ValueError("vortex multiplicities must be positive integers")
            if float(np.hypot(*point_displacement(np.array([x1, x2]), (0.0, 0.0)))) < 1e-12:
                raise ValueError("a vortex may not sit at the origin")
        return self

    @classmethod
    def from_config(cls, config: ProblemConfig) -> "WeightSpec":
        return cls(hstar=config.hstar, vortices=config.vortices)


class BaseSolution(BaseModel):
    """Converged mean-zero solution w of the regular mean field equation."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    w: PeriodicField
    rho: float
    residual: float
    margin: float = math.nan
    iterations: int = 0
    history: Tuple[float, ...] = ()
    degenerate: bool = False

    def resampled(self, n: int) -> "BaseSolution":
        """The same solution moved spectrally onto an n-grid."""
        return self.model_copy(update={"w": resample(self.w, n)})

    def value_at(self, x) -> float:
        return interpolate(self.w, x)


def hstar_values(spec: WeightSpec, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    kind, params = spec.hstar
    if kind == "const":
        return np.full(pts.shape[0], params[0])
    c1, c2 = params
    return np.exp(c1 * np.cos(2.0 * math.pi * pts[:, 0]) + c2 * np.cos(2.0 * math.pi * pts[:, 1]))


def h_values(spec: WeightSpec, points: np.ndarray, greens: GreenEvaluator) -> np.ndarray:
    """Pointwise h at an array of points of shape (m, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    values = hstar_values(spec, pts)
    for x1, x2, alpha in spec.vortices:
        q = (x1, x2)
        d2 = (point_displacement(pts, q) ** 2).sum(axis=1)
        values = values * d2 ** alpha * np.exp(-FOUR_PI * alpha * greens.regular_values(pts, q))
    return values


def assemble_h(spec: WeightSpec, greens: GreenEvaluator) -> PeriodicField:
    """
    Sample h on the evaluator's grid.

    Args:
        spec: Weight specification
        greens: Green evaluator; its grid is the target grid

    Returns:
        h ≥ 0, vanishing to order 2α_i exactly at each extra vortex
    """
    grid = greens.grid
    x1, x2 = node_coordinates(grid)
    kind, params = spec.hstar
    if kind == "const":
        values = np.full((grid.n, grid.n), params[0])
    else:
        values = np.exp(params[0] * np.cos(2.0 * math.pi * x1) + params[1] * np.cos(2.0 * math.pi * x2))
    for v1, v2, alpha in spec.vortices:
        q = (v1, v2)
        d2 = torus_distance(grid, q) ** 2
        values = values * d2 ** alpha * np.exp(-FOUR_PI * alpha * greens.regular_field(q).values)
    return PeriodicField(grid=grid, values=values)


def check_rho(rho: float) -> None:
    """Reject ρ ≤ 8π and ρ within 1e-9 of the lattice 8πℕ."""
    if rho <= EIGHT_PI:
        raise RhoForbidden(f"rho = {rho:.6g} must exceed 8π", {"rho": rho})
    k = round(rho / EIGHT_PI)
    if abs(rho - k * EIGHT_PI) < 1e-9:
        raise RhoForbidden(f"rho = {rho:.12g} lies on 8πℕ (k = {k})", {"rho": rho, "k": k})
    if rho > 2.0 * EIGHT_PI:
        logger.warning("rho = %.6g lies above 16π; the base branch is not unique there", rho)


def normalized_density(w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """ν = h e^w / ∫ h e^w, evaluated with the maximum of w factored out."""
    weight = h * np.exp(w - w.max())
    return weight / weight.mean()


def base_residual_array(w: np.ndarray, h: np.ndarray, rho: float) -> np.ndarray:
    return laplacian_array(w) + (rho - EIGHT_PI) * (normalized_density(w, h) - 1.0)


def _jacobian_operator(w: np.ndarray, h: np.ndarray, rho: float) -> LinearOperator:
    n = w.shape[0]
    nu = normalized_density(w, h)
    coupling = rho - EIGHT_PI

    def matvec(x: np.ndarray) -> np.ndarray:
        phi = x.reshape(n, n)
        out = laplacian_array(phi) + coupling * nu * (phi - (nu * phi).mean())
        return out.ravel()

    return LinearOperator((n * n, n * n), matvec=matvec, rmatvec=matvec, dtype=float)


def _poisson_preconditioner(n: int) -> LinearOperator:
    def apply(x: np.ndarray) -> np.ndarray:
        return inverse_laplacian_array(x.reshape(n, n)).ravel()

    return LinearOperator((n * n, n * n), matvec=apply, dtype=float)


def base_jacobian_defect(w: PeriodicField, h: PeriodicField, rho: float,
                         directions: int = 10, step: float = 1e-5, seed: int = 0) -> float:
    """
    Largest relative gap between centered differences of F and the assembled Jacobian.

    Directions are random combinations of low Fourier modes.
    """
    n = w.grid.n
    rng = np.random.default_rng(seed)
    x1, x2 = node_coordinates(w.grid)
    jac = _jacobian_operator(w.values, h.values, rho)
    worst = 0.0
    for _ in range(directions):
        k1, k2 = rng.integers(-3, 4, size=2)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        phi = np.cos(2.0 * math.pi * (k1 * x1 + k2 * x2) + phase) + 0.3 * rng.standard_normal() * np.sin(2.0 * math.pi * x1)
        phi -= phi.mean()
        fd = (base_residual_array(w.values + step * phi, h.values, rho)
              - base_residual_array(w.values - step * phi, h.values, rho)) / (2.0 * step)
        exact = jac.matvec(phi.ravel()).reshape(n, n)
        worst = max(worst, float(np.abs(fd - exact).max() / max(np.abs(exact).max(), 1e-300)))
    return worst


def solve_base(
    rho: float,
    h: PeriodicField,
    w0: Optional[PeriodicField] = None,
    newton_tol: float = 1e-11,
    max_iter: int = 50,
    margin_tol: float = 1e-2,
    compute_margin: bool = True,
) -> BaseSolution:
    """
    Newton iteration for the base equation on mean-zero fields.

    Each step solves J δ = -F with GMRES preconditioned by the mean-zero
    Poisson inverse; a step that increases the residual is halved.

    Args:
        rho: Mass parameter, ρ > 8π and ρ ∉ 8πℕ
        h: Weight on the solve grid
        w0: Initial guess (default 0); its mean is discarded
        newton_tol: Target max-norm residual
        max_iter: Newton iteration budget
        margin_tol: Margins below this flag the solution as degenerate
        compute_margin: Whether to run the margin estimate

    Returns:
        BaseSolution with residual history and margin

    Raises:
        RhoForbidden: If ρ is not admissible
        NoConvergence: If the budget is exhausted or step halving fails
    """
    check_rho(rho)
    grid = h.grid
    n = grid.n
    w = np.zeros((n, n)) if w0 is None else np.array(w0.values, dtype=float)
    w -= w.mean()
    res = float(np.abs(base_residual_array(w, h.values, rho)).max())
    history = [res]
    precond = _poisson_preconditioner(n)
    iterations = 0
    logger.info("Base Newton start: rho/pi=%.6g n=%d residual=%.3e", rho / math.pi, n, res)
    while True:
        floor = np.finfo(float).eps * laplacian_norm(n) * np.abs(w).max()
        tol = max(newton_tol, floor)
        if res < tol:
            break
        if iterations >= max_iter:
            raise NoConvergence(
                f"base Newton did not converge in {max_iter} iterations (residual {res:.3e})",
                {"residual": res, "history": history},
            )
        F = base_residual_array(w, h.values, rho)
        jac = _jacobian_operator(w, h.values, rho)
        rhs = -(F - F.mean()).ravel()
        inner_tol = max(1e-14, min(1e-4, res))
        delta, info = gmres(jac, rhs, rtol=inner_tol, atol=0.0, restart=60, maxiter=20, M=precond)
        if info < 0:
            raise LinearNoConvergence("GMRES breakdown in the base Newton step", {"info": info})
        delta = delta.reshape(n, n)
        delta -= delta.mean()

        scale = {"value": 1.0}
        current = res

        def attempt() -> Tuple[np.ndarray, float]:
            trial = w + scale["value"] * delta
            trial -= trial.mean()
            trial_res = float(np.abs(base_residual_array(trial, h.values, rho)).max())
            if trial_res > current and trial_res >= tol:
                scale["value"] *= 0.5
                raise ResidualIncrease(f"residual {trial_res:.3e} > {current:.3e}")
            return trial, trial_res

        try:
            w, res = Retrying(
                stop=stop_after_attempt(MAX_HALVINGS),
                retry=retry_if_exception_type(ResidualIncrease),
                reraise=True,
            )(attempt)
        except ResidualIncrease as exc:
            raise NoConvergence("base Newton step halving failed", {"residual": current}) from exc
        iterations += 1
        history.append(res)
        logger.info("Base Newton iter %d: residual=%.3e step=%.3g", iterations, res, scale["value"])

    field_w = PeriodicField(grid=grid, values=w)
    margin = math.nan
    degenerate = False
    if compute_margin:
        margin = _margin(field_w, h, rho)
        degenerate = margin < margin_tol
        if degenerate:
            logger.warning("Base solution is degenerate: margin %.3e < %.1e", margin, margin_tol)
    return BaseSolution(w=field_w, rho=rho, residual=res, margin=margin,
                        iterations=iterations, history=tuple(history), degenerate=degenerate)


def _margin(w: PeriodicField, h: PeriodicField, rho: float, seed: int = 0) -> float:
    n = w.grid.n
    jac = _jacobian_operator(w.values, h.values, rho)

    def precondition(x: np.ndarray) -> np.ndarray:
        return shifted_inverse_array(x.reshape(n, n), 1.0).ravel()

    precond = LinearOperator((n * n, n * n), matvec=precondition, dtype=float)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n))
    x = x - x.mean()
    x /= np.linalg.norm(x)
    estimate = math.inf
    for iteration in range(MARGIN_MAX_ITER):
        y, info = minres(jac, x.ravel(), shift=MARGIN_SHIFT, M=precond, rtol=1e-10, maxiter=2000)
        if info < 0:
            raise LinearNoConvergence("MINRES failed in the margin iteration", {"info": info, "iteration": iteration})
        if info > 0:
            logger.debug("MINRES stopped at its iteration limit in margin step %d", iteration)
        y = y.reshape(n, n)
        y -= y.mean()
        x = y / np.linalg.norm(y)
        rayleigh = float(np.vdot(x.ravel(), jac.matvec(x.ravel())))
        if abs(rayleigh - estimate) < 1e-11 * max(1.0, abs(rayleigh)):
            estimate = rayleigh
            break
        estimate = rayleigh
    logger.info("Non-degeneracy margin %.6g after %d inverse iterations", abs(estimate), iteration + 1)
    return abs(estimate)


def nondegeneracy_margin(sol: BaseSolution, h: PeriodicField) -> float:
    """
    Smallest |eigenvalue| of the linearized base operator on mean-zero fields.

    The operator φ ↦ Δφ + (ρ - 8π) ν (φ - ∫νφ) is symmetric; shifted inverse
    iteration with MINRES and the SPD preconditioner (1 - Δ)^{-1} locates the
    eigenvalue nearest zero.
    """
    return _margin(sol.w, h, sol.rho)


def base_mass(sol: BaseSolution, h: PeriodicField) -> float:
    """∫ h e^w on the grid of h; w is resampled when grids differ."""
    w = sol.w if sol.w.grid.n == h.grid.n else resample(sol.w, h.grid.n)
    return float((h.values * np.exp(w.values)).mean())


def save_base(sol: BaseSolution, path: str) -> Dict[str, str]:
    """
    Write w as a field dump plus a JSON sidecar.

    Args:
        sol: Solution to save
        path: Path prefix; ".pfld" and ".json" are appended

    Returns:
        The two file paths
    """
    field_path = f"{path}.pfld"
    meta_path = f"{path}.json"
    dump_field(sol.w, field_path)
    write_json({
        "rho": sol.rho,
        "residual": sol.residual,
        "margin": sol.margin,
        "iterations": sol.iterations,
        "degenerate": sol.degenerate,
        "n": sol.w.grid.n,
    }, meta_path)
    return {"field": field_path, "meta": meta_path}


def load_base(path: str) -> BaseSolution:
    meta = read_json(f"{path}.json")
    w = load_field(f"{path}.pfld")
    margin = meta.get("margin")
    return BaseSolution(
        w=w,
        rho=float(meta["rho"]),
        residual=float(meta["residual"]),
        margin=math.nan if margin is None else float(margin),
        iterations=int(meta.get("iterations", 0)),
        degenerate=bool(meta.get("degenerate", False)),
    )


def base_exists(path: str) -> bool:
    return os.path.exists(f"{path}.pfld") and os.path.exists(f"{path}.json")
