"""
Greens Module

This module handles the Green's function of -Δ on the flat unit torus,

    -Δ G(·, p) = δ_p - 1,    ∫ G(·, p) = 0,

its regular part R(x, p) = G(x, p) + (1/2π) ln d(x, p), and the
collapsing-pair quantities built from them. G is evaluated with an Ewald
split of width σ: a short-range term (1/4π) E1(d²/2σ²) on the nearest image
and a Gaussian-damped Fourier sum for the long-range term.
"""

import logging
import math
import threading
from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.special import exp1

from .config import EWALD_SIGMA
from .torus_spectral import (
    Grid,
    PeriodicField,
    TWO_PI,
    axis_displacements,
    point_displacement,
)

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
# exp(-2π²σ²K²) falls below 1e-17 for K ≥ 1.37/σ
MODE_FACTOR = 1.45


class CollapsePair(BaseModel):
    """Two unit-strength vortices at ±t·e that merge as t → 0."""

    model_config = ConfigDict(frozen=True)

    t: float
    e: Tuple[float, float] = (1.0, 0.0)

    @field_validator("t")
    @classmethod
    def _check_t(cls, t: float) -> float:
        if not 0.0 < t < 0.25:
            raise ValueError("t must lie in (0, 1/4)")
        return t

    @field_validator("e")
    @classmethod
    def _check_e(cls, e: Tuple[float, float]) -> Tuple[float, float]:
        if abs(math.hypot(e[0], e[1]) - 1.0) > 1e-12:
            raise ValueError("e must be a unit vector")
        return e

    @property
    def sources(self) -> Tuple[np.ndarray, np.ndarray]:
        e = np.asarray(self.e, dtype=float)
        return self.t * e, -self.t * e


def robin_constant_oracle(terms: int = 40) -> float:
    """
    Robin constant R(p, p) of the square unit torus from the eta-function value.

    R(p, p) = -(1/2π) ln(2π η(i)²), with η(i) = e^{-π/12} Π (1 - e^{-2πn}).

    Args:
        terms: Number of factors kept in the product

    Returns:
        The Robin constant
    """
    log_product = sum(math.log1p(-math.exp(-TWO_PI * n)) for n in range(1, terms + 1))
    return -math.log(TWO_PI) / TWO_PI + 1.0 / 12.0 - log_product / math.pi


class GreenEvaluator:
    """
    Evaluate G and R on a grid or at arbitrary points.

    Grid fields are cached per source point; the cache is guarded by a lock so
    one evaluator can be shared between threads.
    """

    def __init__(self, grid: Grid, sigma: float = EWALD_SIGMA):
        if not 0.0 < sigma <= 0.06:
            raise ValueError("sigma must lie in (0, 0.06]")
        self.grid = grid
        self.sigma = sigma
        self.truncation = int(math.ceil(MODE_FACTOR / sigma))
        k = np.arange(-self.truncation, self.truncation + 1, dtype=float)
        k2 = k[:, None] ** 2 + k[None, :] ** 2
        weights = np.zeros_like(k2)
        nonzero = k2 > 0
        weights[nonzero] = np.exp(-2.0 * math.pi ** 2 * sigma ** 2 * k2[nonzero]) / (TWO_PI ** 2 * k2[nonzero])
        self._modes = k
        self._weights = weights
        self._cache: Dict[Tuple[str, float, float], PeriodicField] = {}
        self._lock = threading.Lock()
        self.robin = self._short_regular(np.zeros(1))[0] + self._long_points(np.zeros((1, 2)))[0] - 0.5 * sigma ** 2
        logger.debug("Green evaluator n=%d sigma=%.3g modes=%d robin=%.12f",
                     grid.n, sigma, 2 * self.truncation + 1, self.robin)

    # --- Ewald pieces -------------------------------------------------------

    def _short(self, r2: np.ndarray) -> np.ndarray:
        """(1/4π) E1(r²/2σ²); only called where r > 0."""
        return exp1(r2 / (2.0 * self.sigma ** 2)) / FOUR_PI

    def _short_regular(self, r2: np.ndarray) -> np.ndarray:
        """Short-range term plus (1/2π) ln r, continuous through r = 0."""
        u = np.asarray(r2, dtype=float) / (2.0 * self.sigma ** 2)
        out = np.empty_like(u)
        small = u < 1e-10
        out[small] = -np.euler_gamma + u[small]
        big = ~small
        out[big] = exp1(u[big]) + np.log(u[big])
        return (out + math.log(2.0 * self.sigma ** 2)) / FOUR_PI

    def _long_points(self, disp: np.ndarray) -> np.ndarray:
        c1 = np.cos(TWO_PI * np.outer(disp[:, 0], self._modes))
        s1 = np.sin(TWO_PI * np.outer(disp[:, 0], self._modes))
        c2 = np.cos(TWO_PI * np.outer(disp[:, 1], self._modes))
        s2 = np.sin(TWO_PI * np.outer(disp[:, 1], self._modes))
        return ((c1 @ self._weights) * c2).sum(axis=1) - ((s1 @ self._weights) * s2).sum(axis=1)

    def _long_grid(self, p) -> np.ndarray:
        d1, d2 = axis_displacements(self.grid, p)
        c1 = np.cos(TWO_PI * np.outer(d1, self._modes))
        s1 = np.sin(TWO_PI * np.outer(d1, self._modes))
        c2 = np.cos(TWO_PI * np.outer(d2, self._modes))
        s2 = np.sin(TWO_PI * np.outer(d2, self._modes))
        return c1 @ self._weights @ c2.T - s1 @ self._weights @ s2.T

    def _grid_r2(self, p) -> np.ndarray:
        d1, d2 = axis_displacements(self.grid, p)
        return d1[:, None] ** 2 + d2[None, :] ** 2

    # --- pointwise ----------------------------------------------------------

    def green_values(self, points: np.ndarray, p) -> np.ndarray:
        """G(x, p) at points of shape (m, 2); the value at x = p is R(p, p)."""
        disp = point_displacement(np.atleast_2d(points), p)
        r2 = (disp ** 2).sum(axis=1)
        out = self._long_points(disp) - 0.5 * self.sigma ** 2
        at_source = r2 == 0.0
        out[~at_source] += self._short(r2[~at_source])
        out[at_source] = self.robin
        return out

    def regular_values(self, points: np.ndarray, p) -> np.ndarray:
        """R(x, p) at points of shape (m, 2), smooth through x = p."""
        disp = point_displacement(np.atleast_2d(points), p)
        r2 = (disp ** 2).sum(axis=1)
        return self._short_regular(r2) + self._long_points(disp) - 0.5 * self.sigma ** 2

    def regular_part(self, x, p) -> float:
        """R(x, p) = G(x, p) + (1/2π) ln d(x, p) at a single point pair."""
        return float(self.regular_values(np.asarray(x, dtype=float)[None, :], p)[0])

    # --- grid fields --------------------------------------------------------

    def _cached(self, kind: str, p, build) -> PeriodicField:
        key = (kind, round(float(p[0]) % 1.0, 14), round(float(p[1]) % 1.0, 14))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = build()
        with self._lock:
            self._cache.setdefault(key, value)
            return self._cache[key]

    def green(self, p) -> PeriodicField:
        """
        The field G(·, p) on the grid.

        Args:
            p: Source point

        Returns:
            PeriodicField with the logarithmic singularity at p; a node that
            coincides with p holds R(p, p)
        """
        def build() -> PeriodicField:
            r2 = self._grid_r2(p)
            values = self._long_grid(p) - 0.5 * self.sigma ** 2
            at_source = r2 == 0.0
            values[~at_source] += self._short(r2[~at_source])
            values[at_source] = self.robin
            return PeriodicField(grid=self.grid, values=values)

        return self._cached("green", p, build)

    def regular_field(self, p) -> PeriodicField:
        """The smooth field R(·, p) on the grid."""
        def build() -> PeriodicField:
            values = self._short_regular(self._grid_r2(p)) + self._long_grid(p) - 0.5 * self.sigma ** 2
            return PeriodicField(grid=self.grid, values=values)

        return self._cached("regular", p, build)

    def collapse_potential(self, pair: CollapsePair) -> PeriodicField:
        """G_t = 4πG(·, te) + 4πG(·, -te)."""
        plus, minus = pair.sources
        values = FOUR_PI * (self.green(plus).values + self.green(minus).values)
        return PeriodicField(grid=self.grid, values=values)

    def collapse_regular(self, pair: CollapsePair) -> PeriodicField:
        """R_t = 4πR(·, te) + 4πR(·, -te)."""
        plus, minus = pair.sources
        values = FOUR_PI * (self.regular_field(plus).values + self.regular_field(minus).values)
        return PeriodicField(grid=self.grid, values=values)

    def singular_weight(self, pair: CollapsePair) -> PeriodicField:
        """
        exp(-G_t) in factorized form d(·, te)² d(·, -te)² exp(-R_t).

        The singular potential is never exponentiated; the weight vanishes to
        second order at both sources.
        """
        plus, minus = pair.sources
        values = self._grid_r2(plus) * self._grid_r2(minus) * np.exp(-self.collapse_regular(pair).values)
        return PeriodicField(grid=self.grid, values=values)

    def collapse_regular_values(self, points: np.ndarray, pair: CollapsePair) -> np.ndarray:
        plus, minus = pair.sources
        return FOUR_PI * (self.regular_values(points, plus) + self.regular_values(points, minus))

    def collapse_potential_values(self, points: np.ndarray, pair: CollapsePair) -> np.ndarray:
        plus, minus = pair.sources
        return FOUR_PI * (self.green_values(points, plus) + self.green_values(points, minus))

    def singular_weight_values(self, points: np.ndarray, pair: CollapsePair) -> np.ndarray:
        plus, minus = pair.sources
        pts = np.atleast_2d(points)
        d_plus = (point_displacement(pts, plus) ** 2).sum(axis=1)
        d_minus = (point_displacement(pts, minus) ** 2).sum(axis=1)
        return d_plus * d_minus * np.exp(-self.collapse_regular_values(pts, pair))

    def spectral_defect(self, p, k_max: int) -> float:
        """
        Largest relative deviation of the DFT of sampled G(·, p) from the
        exact coefficients e^{-2πik·p}/(4π²|k|²), over 0 < max|k_i| ≤ k_max.
        """
        n = self.grid.n
        coeffs = np.fft.fft2(self.green(p).values) / (n * n)
        worst = 0.0
        for k1 in range(-k_max, k_max + 1):
            for k2 in range(-k_max, k_max + 1):
                if k1 == 0 and k2 == 0:
                    continue
                exact = np.exp(-1j * TWO_PI * (k1 * p[0] + k2 * p[1])) / (TWO_PI ** 2 * (k1 * k1 + k2 * k2))
                worst = max(worst, abs(coeffs[k1 % n, k2 % n] - exact) / abs(exact))
        return float(worst)
