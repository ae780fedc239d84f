"""
Liouville Module

This module handles the entire-plane Liouville structure behind the bubble:
the classified solutions v_{μ,a} of Δv + e^v = 0, the three kernels of the
linearized operator L = Δ + 8/(1+|z|²)², the two test functions used in the
kernel-mass identities, and radial quadrature oracles for the integrals the
reduction needs.

Every point argument accepts a single plane point or an array of shape
(..., 2); functions return arrays of the leading shape.
"""

import logging
import math
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.integrate import quad

from .errors import ConfigError

logger = logging.getLogger(__name__)

FD_STEP = 1e-4


class EntireBubble(BaseModel):
    """v_{μ,a}(z) = ln(8 e^μ / (1 + e^μ |z + a|²)²)."""

    model_config = ConfigDict(frozen=True)

    mu: float = 0.0
    a: Tuple[float, float] = (0.0, 0.0)


class KernelIndex(BaseModel):
    model_config = ConfigDict(frozen=True)

    i: int

    @field_validator("i")
    @classmethod
    def _check_i(cls, i: int) -> int:
        if i not in (0, 1, 2):
            raise ValueError("kernel index must be 0, 1 or 2")
        return i


IndexLike = Union[int, KernelIndex]


def _index(i: IndexLike) -> int:
    if isinstance(i, KernelIndex):
        return i.i
    return KernelIndex(i=i).i


def _split(z) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=float)
    z1, z2 = z[..., 0], z[..., 1]
    return z1, z2, z1 * z1 + z2 * z2


def bubble_value(b: EntireBubble, z) -> np.ndarray:
    z1, z2, _ = _split(z)
    shifted = (z1 + b.a[0]) ** 2 + (z2 + b.a[1]) ** 2
    return math.log(8.0) + b.mu - 2.0 * np.log1p(math.exp(b.mu) * shifted)


def kernel_value(i: IndexLike, z) -> np.ndarray:
    """
    Kernel Y_i of the linearized Liouville operator.

    Args:
        i: 0 for the dilation kernel, 1 or 2 for the translation kernels
        z: Plane point(s)

    Returns:
        Y_0 = (1 - |z|²)/(1 + |z|²) or Y_i = z_i/(1 + |z|²)
    """
    i = _index(i)
    z1, z2, r2 = _split(z)
    if i == 0:
        return (1.0 - r2) / (1.0 + r2)
    return (z1 if i == 1 else z2) / (1.0 + r2)


def kernel_gradient(i: IndexLike, z) -> np.ndarray:
    """Closed-form gradient of Y_i, shape (..., 2)."""
    i = _index(i)
    z1, z2, r2 = _split(z)
    denom = (1.0 + r2) ** 2
    if i == 0:
        return np.stack([-4.0 * z1 / denom, -4.0 * z2 / denom], axis=-1)
    zi = z1 if i == 1 else z2
    own = ((1.0 + r2) - 2.0 * zi * zi) / denom
    other = -2.0 * z1 * z2 / denom
    if i == 1:
        return np.stack([own, other], axis=-1)
    return np.stack([other, own], axis=-1)


def kernel_laplacian(i: IndexLike, z) -> np.ndarray:
    i = _index(i)
    z1, z2, r2 = _split(z)
    if i == 0:
        return -8.0 * (1.0 - r2) / (1.0 + r2) ** 3
    return -8.0 * (z1 if i == 1 else z2) / (1.0 + r2) ** 3


def bubble_potential(z) -> np.ndarray:
    """8/(1+|z|²)², the linearization weight e^{v_{0,0}}."""
    _, _, r2 = _split(z)
    return 8.0 / (1.0 + r2) ** 2


def linearized_residual(i: IndexLike, z) -> np.ndarray:
    """L Y_i = ΔY_i + 8Y_i/(1+|z|²)² from closed forms; zero for every kernel."""
    return kernel_laplacian(i, z) + bubble_potential(z) * kernel_value(i, z)


def test_eta1(z) -> np.ndarray:
    """η₁ = -Y_0 - 1 = -2/(1+|z|²); L η₁ = -8/(1+|z|²)²."""
    _, _, r2 = _split(z)
    return -2.0 / (1.0 + r2)


def test_eta2(z) -> np.ndarray:
    """
    η₂ = (4/3) ln(1+|z|²) Y_0 + 8/(3(1+|z|²)); L η₂ = 16 Y_0/(1+|z|²)².

    Grows like ln|z|; bounded by (8/3)(1 + ln(1+|z|)).
    """
    _, _, r2 = _split(z)
    return (4.0 / 3.0) * np.log1p(r2) * (1.0 - r2) / (1.0 + r2) + 8.0 / (3.0 * (1.0 + r2))


def fd_laplacian(f: Callable[[np.ndarray], np.ndarray], z, h: float = FD_STEP) -> np.ndarray:
    """Fourth-order centered finite-difference Laplacian of a plane function."""
    z = np.asarray(z, dtype=float)
    total = -60.0 * f(z)
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = h
        total = total + 16.0 * (f(z + step) + f(z - step)) - (f(z + 2 * step) + f(z - 2 * step))
    return total / (12.0 * h * h)


def rho_weight(z, alpha: float) -> np.ndarray:
    """Norm weight (1+|z|)^{-1-α/2}."""
    _, _, r2 = _split(z)
    return (1.0 + np.sqrt(r2)) ** (-1.0 - 0.5 * alpha)


# Radial integrands already carry the angular factor; tails are exact
# integrals over [r_max, ∞) where a closed form exists.

def _mass(r, alpha):
    return 16.0 * math.pi * r / (1.0 + r * r) ** 2


def _mass_tail(r_max, alpha):
    return 8.0 * math.pi / (1.0 + r_max * r_max)


def _y0_weight(r, alpha):
    return 2.0 * math.pi * r * (1.0 - r * r) / (1.0 + r * r) ** 3


def _y0_weight_tail(r_max, alpha):
    s = r_max * r_max
    return -math.pi * s / (1.0 + s) ** 2


def _y1_energy(r, alpha):
    f = r / (1.0 + r * r)
    df = (1.0 - r * r) / (1.0 + r * r) ** 2
    return math.pi * r * (df * df + 1.0 / (1.0 + r * r) ** 2 + 8.0 * f * f / (1.0 + r * r) ** 2)


def _y1_weight(r, alpha):
    f = r / (1.0 + r * r)
    return 8.0 * math.pi * r * f * f / (1.0 + r * r) ** 2


def _rho_sq(r, alpha):
    return 2.0 * math.pi * r * (1.0 + r) ** (-2.0 - alpha)


def _rho_sq_tail(r_max, alpha):
    u = 1.0 + r_max
    return 2.0 * math.pi * (u ** (-alpha) / alpha - u ** (-1.0 - alpha) / (1.0 + alpha))


RADIAL_INTEGRANDS: Dict[str, Tuple[Callable, Optional[Callable]]] = {
    "mass": (_mass, _mass_tail),
    "y0_weight": (_y0_weight, _y0_weight_tail),
    "y1_energy": (_y1_energy, None),
    "y1_weight": (_y1_weight, None),
    "rho_sq": (_rho_sq, _rho_sq_tail),
}


def radial_quadrature(name: str, r_max: float = math.inf, alpha: float = 0.25,
                      with_tail: bool = True) -> Tuple[float, float]:
    """
    Integrate a registered radial integrand over [0, r_max], optionally adding its tail.

    The integral is taken in the variable u = ln(1 + r), split at r = 1.

    Args:
        name: Key of RADIAL_INTEGRANDS
        r_max: Upper radius; math.inf integrates the whole plane
        alpha: Weight exponent used by the "rho_sq" integrand
        with_tail: Add the closed-form integral over [r_max, ∞) when one exists

    Returns:
        (value, absolute error estimate)

    Raises:
        ConfigError: If the integrand name is unknown
    """
    if name not in RADIAL_INTEGRANDS:
        raise ConfigError(f"unknown radial integrand '{name}'",
                          {"known": sorted(RADIAL_INTEGRANDS)})
    integrand, tail = RADIAL_INTEGRANDS[name]

    def mapped(u: float) -> float:
        if u > 600.0:
            return 0.0
        return integrand(math.expm1(u), alpha) * math.exp(u)

    u_max = math.log1p(r_max) if math.isfinite(r_max) else math.inf
    knot = min(math.log(2.0), u_max)
    value, error = quad(mapped, 0.0, knot, epsabs=1e-13, epsrel=1e-13, limit=200)
    if u_max > knot:
        upper, upper_error = quad(mapped, knot, u_max, epsabs=1e-13, epsrel=1e-13, limit=400)
        value += upper
        error += upper_error
    if with_tail and tail is not None and math.isfinite(r_max):
        value += tail(r_max, alpha)
    logger.debug("radial integral %s r_max=%g -> %.15g (err %.1e)", name, r_max, value, error)
    return value, error


def radial_integral(name: str, r_max: float = math.inf, alpha: float = 0.25, with_tail: bool = True) -> float:
    return radial_quadrature(name, r_max, alpha, with_tail)[0]
