"""
Torus Spectral Module

This module handles the periodic grid representation of functions on the
flat unit torus R^2/Z^2 (volume 1) and the Fourier-spectral operators used
by every solver: Laplacian, mean-zero Poisson inverse, quadrature,
trigonometric interpolation and exact grid resampling.

Sample values[i, j] of a PeriodicField sits at the node (i/n, j/n). Spectral
coefficients are stored in FFT order; `wavenumbers(n)` maps an index to its
integer wave number in {-n/2, ..., n/2 - 1}.
"""

import logging
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.fft as sfft
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import ConfigError, NoConvergence, NonZeroMean

logger = logging.getLogger(__name__)

MIN_POINTS = 16
TWO_PI = 2.0 * np.pi


class Grid(BaseModel):
    """Uniform n x n grid on the unit torus."""

    model_config = ConfigDict(frozen=True)

    n: int

    @field_validator("n")
    @classmethod
    def _check_n(cls, n: int) -> int:
        if n % 2:
            raise ValueError("n must be even")
        if n < MIN_POINTS:
            raise ValueError(f"n must be at least {MIN_POINTS}")
        return n

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def cell_area(self) -> float:
        return 1.0 / (self.n * self.n)


def _frozen_copy(values: np.ndarray, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class PeriodicField(BaseModel):
    """Real scalar field sampled on the nodes of a torus grid."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _freeze(cls, values) -> np.ndarray:
        return _frozen_copy(values, np.float64)

    @model_validator(mode="after")
    def _check_samples(self) -> "PeriodicField":
        n = self.grid.n
        if self.values.shape != (n, n):
            raise ValueError(f"values must have shape ({n}, {n}), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        return self

    def mean(self) -> float:
        return float(self.values.mean())

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


class SpectralField(BaseModel):
    """Fourier coefficients of a real periodic field (FFT order, normalized by n^2)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    coeffs: np.ndarray

    @field_validator("coeffs", mode="before")
    @classmethod
    def _freeze(cls, coeffs) -> np.ndarray:
        return _frozen_copy(coeffs, np.complex128)

    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)


def make_grid(n: int) -> Grid:
    """
    Create a torus grid with n points per axis.

    Args:
        n: Points per axis; must be even and at least 16

    Returns:
        The Grid

    Raises:
        ConfigError: If n is odd or too small
    """
    if int(n) != n:
        raise ConfigError("n must be an integer")
    n = int(n)
    if n % 2:
        raise ConfigError("n must be even")
    if n < MIN_POINTS:
        raise ConfigError(f"n must be at least {MIN_POINTS}")
    return Grid(n=n)


def field(grid: Grid, values: np.ndarray) -> PeriodicField:
    return PeriodicField(grid=grid, values=values)


def wavenumbers(n: int) -> np.ndarray:
    """Integer wave numbers of the FFT axis of length n."""
    return np.rint(sfft.fftfreq(n, d=1.0 / n)).astype(int)


@lru_cache(maxsize=8)
def _laplacian_symbol(n: int) -> np.ndarray:
    k = wavenumbers(n).astype(float)
    symbol = -(TWO_PI ** 2) * (k[:, None] ** 2 + k[None, :] ** 2)
    symbol.setflags(write=False)
    return symbol


@lru_cache(maxsize=8)
def _inverse_symbol(n: int) -> np.ndarray:
    symbol = _laplacian_symbol(n)
    inverse = np.zeros_like(symbol)
    nonzero = symbol != 0.0
    inverse[nonzero] = 1.0 / symbol[nonzero]
    inverse.setflags(write=False)
    return inverse


def laplacian_norm(n: int) -> float:
    """Largest magnitude of the discrete Laplacian symbol on an n-grid."""
    return float(2.0 * (TWO_PI ** 2) * (n / 2) ** 2)


def laplacian_array(values: np.ndarray) -> np.ndarray:
    """Spectral Laplacian of raw samples."""
    n = values.shape[0]
    return sfft.ifft2(sfft.fft2(values) * _laplacian_symbol(n)).real


def inverse_laplacian_array(values: np.ndarray) -> np.ndarray:
    """Mean-zero u with Laplacian(u) equal to the mean-zero part of `values`."""
    n = values.shape[0]
    return sfft.ifft2(sfft.fft2(values) * _inverse_symbol(n)).real


def shifted_inverse_array(values: np.ndarray, shift: float) -> np.ndarray:
    """Apply (shift - Laplacian)^(-1); symmetric positive definite for shift > 0."""
    n = values.shape[0]
    return sfft.ifft2(sfft.fft2(values) / (shift - _laplacian_symbol(n))).real


def node_coordinates(grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    """Return the node coordinate arrays (x1, x2), each of shape (n, n)."""
    axis = np.arange(grid.n) / grid.n
    return np.meshgrid(axis, axis, indexing="ij")


def wrap(delta: np.ndarray) -> np.ndarray:
    """Minimum-image representative of a torus displacement, in [-1/2, 1/2)."""
    return delta - np.floor(delta + 0.5)


def axis_displacements(grid: Grid, p) -> Tuple[np.ndarray, np.ndarray]:
    """1-D minimum-image displacements of the grid axes from the point p."""
    axis = np.arange(grid.n) / grid.n
    return wrap(axis - p[0]), wrap(axis - p[1])


def torus_displacement(grid: Grid, p) -> Tuple[np.ndarray, np.ndarray]:
    """Minimum-image displacement x - p for every node x, as two (n, n) arrays."""
    d1, d2 = axis_displacements(grid, p)
    return np.broadcast_to(d1[:, None], (grid.n, grid.n)), np.broadcast_to(d2[None, :], (grid.n, grid.n))


def torus_distance(grid: Grid, p) -> np.ndarray:
    d1, d2 = axis_displacements(grid, p)
    return np.hypot(d1[:, None], d2[None, :])


def point_displacement(x: np.ndarray, p) -> np.ndarray:
    """Minimum-image displacement for an array of points of shape (..., 2)."""
    return wrap(np.asarray(x, dtype=float) - np.asarray(p, dtype=float))


def point_distance(x: np.ndarray, p) -> np.ndarray:
    d = point_displacement(x, p)
    return np.hypot(d[..., 0], d[..., 1])


def laplacian(f: PeriodicField) -> PeriodicField:
    """
    Spectral Laplacian on the torus: coefficient k is multiplied by -4π²|k|².

    Args:
        f: Input field

    Returns:
        The Laplacian as a PeriodicField on the same grid
    """
    return PeriodicField(grid=f.grid, values=laplacian_array(f.values))


def solve_poisson_meanzero(
    rhs: PeriodicField,
    mean_tol: float = 1e-10,
    solver_tol: float = 1e-10,
) -> PeriodicField:
    """
    Solve -Δu = rhs for the mean-zero u.

    Args:
        rhs: Right-hand side; its mean must vanish to mean_tol
        mean_tol: Admissible |mean(rhs)|
        solver_tol: Admissible max|Δu + rhs|, relative to max(1, max|rhs|)

    Returns:
        The mean-zero solution

    Raises:
        NonZeroMean: If the compatibility condition fails
        NoConvergence: If the spectral residual check fails
    """
    mean = rhs.mean()
    if abs(mean) >= mean_tol:
        raise NonZeroMean(
            f"Poisson right-hand side has mean {mean:.3e} (tolerance {mean_tol:.1e})",
            {"mean": mean, "mean_tol": mean_tol},
        )
    u = -inverse_laplacian_array(rhs.values)
    u -= u.mean()
    defect = float(np.abs(laplacian_array(u) + rhs.values - mean).max())
    scale = max(1.0, rhs.max_abs())
    if defect >= solver_tol * scale:
        raise NoConvergence(
            f"Poisson residual {defect:.3e} exceeds {solver_tol:.1e}",
            {"residual": defect, "scale": scale},
        )
    return PeriodicField(grid=rhs.grid, values=u)


def integrate(f: PeriodicField) -> float:
    """Integral over the unit torus: the mean of the samples."""
    return float(f.values.mean())


def mean_zero(f: PeriodicField) -> PeriodicField:
    return PeriodicField(grid=f.grid, values=f.values - f.values.mean())


def to_spectral(f: PeriodicField) -> SpectralField:
    n = f.grid.n
    return SpectralField(grid=f.grid, coeffs=sfft.fft2(f.values) / (n * n))


def from_spectral(s: SpectralField) -> PeriodicField:
    n = s.grid.n
    return PeriodicField(grid=s.grid, values=sfft.ifft2(s.coeffs * (n * n)).real)


def interpolate_many(f: PeriodicField, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of f at an array of points of shape (m, 2)."""
    n = f.grid.n
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    coeffs = sfft.fft2(f.values) / (n * n)
    k = wavenumbers(n)
    e1 = np.exp(1j * TWO_PI * np.outer(pts[:, 0], k))
    e2 = np.exp(1j * TWO_PI * np.outer(pts[:, 1], k))
    return ((e1 @ coeffs) * e2).sum(axis=1).real


def interpolate(f: PeriodicField, x) -> float:
    """
    Evaluate the trigonometric interpolant of f at an arbitrary point.

    Args:
        f: Field to interpolate
        x: Point in [0, 1)^2 (any real point is reduced modulo 1)

    Returns:
        The interpolated value; exact at grid nodes
    """
    return float(interpolate_many(f, np.asarray(x, dtype=float)[None, :])[0])


def _upsample_axis(values: np.ndarray, m: int, axis: int) -> np.ndarray:
    n = values.shape[axis]
    coeffs = sfft.fft(values, axis=axis) / n
    shape = list(values.shape)
    shape[axis] = m
    padded = np.zeros(shape, dtype=complex)
    half = n // 2
    low = [slice(None)] * values.ndim
    src = [slice(None)] * values.ndim
    low[axis] = slice(0, half)
    src[axis] = slice(0, half)
    padded[tuple(low)] = coeffs[tuple(src)]
    low[axis] = slice(m - half + 1, m)
    src[axis] = slice(n - half + 1, n)
    padded[tuple(low)] = coeffs[tuple(src)]
    nyquist = [slice(None)] * values.ndim
    nyquist[axis] = half
    split = coeffs[tuple(nyquist)] / 2.0
    low[axis] = half
    padded[tuple(low)] = split
    low[axis] = m - half
    padded[tuple(low)] = split
    return sfft.ifft(padded * m, axis=axis).real


def resample(f: PeriodicField, n_new: int) -> PeriodicField:
    """
    Move a field to a finer or coarser grid through its trigonometric interpolant.

    Args:
        f: Field to resample
        n_new: Target points per axis; must divide or be a multiple of f.grid.n

    Returns:
        The field on the new grid

    Raises:
        ConfigError: If the grid sizes are incompatible
    """
    n = f.grid.n
    grid = make_grid(n_new)
    if n_new == n:
        return f
    if n_new < n:
        if n % n_new:
            raise ConfigError(f"cannot resample from n={n} to n={n_new}")
        step = n // n_new
        return PeriodicField(grid=grid, values=f.values[::step, ::step])
    if n_new % n:
        raise ConfigError(f"cannot resample from n={n} to n={n_new}")
    values = _upsample_axis(f.values, n_new, axis=0)
    values = _upsample_axis(values, n_new, axis=1)
    return PeriodicField(grid=grid, values=values)
