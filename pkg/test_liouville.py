"""
Tests for the entire-plane Liouville structure.

Validates:
- Kernel identities of the linearized operator
- The entire bubble and the test functions η₁, η₂
- Radial quadrature oracles
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from bubbling import liouville
from bubbling.errors import ConfigError
from bubbling.liouville import (
    EntireBubble,
    KernelIndex,
    bubble_potential,
    bubble_value,
    fd_laplacian,
    kernel_gradient,
    kernel_laplacian,
    kernel_value,
    linearized_residual,
    radial_integral,
)


@pytest.fixture
def points():
    return np.random.default_rng(7).uniform(-3.0, 3.0, size=(20, 2))


class TestKernels:
    """Test suite for Y₀, Y₁, Y₂."""

    @pytest.mark.parametrize("i", [0, 1, 2])
    def test_kernels_solve_linearized_equation(self, i, points):
        assert np.abs(linearized_residual(i, points)).max() < 1e-10

    @pytest.mark.parametrize("i", [0, 1, 2])
    def test_closed_form_laplacian(self, i, points):
        fd = fd_laplacian(lambda z: kernel_value(i, z), points)
        assert np.abs(fd - kernel_laplacian(i, points)).max() < 1e-6

    @pytest.mark.parametrize("i", [0, 1, 2])
    def test_closed_form_gradient(self, i, points):
        h = 1e-6
        grad = kernel_gradient(i, points)
        for axis in range(2):
            step = np.zeros(2)
            step[axis] = h
            fd = (kernel_value(i, points + step) - kernel_value(i, points - step)) / (2 * h)
            assert np.abs(fd - grad[:, axis]).max() < 1e-7

    def test_kernel_index_validated(self):
        with pytest.raises(ValidationError, match="0, 1 or 2"):
            KernelIndex(i=3)
        assert kernel_value(KernelIndex(i=1), np.array([1.0, 0.0])) == pytest.approx(0.5)


class TestEntireBubble:
    """Test suite for v_{μ,a}."""

    @pytest.mark.parametrize("mu,a", [(0.0, (0.0, 0.0)), (0.7, (0.3, -0.2))])
    def test_solves_liouville(self, mu, a, points):
        bubble = EntireBubble(mu=mu, a=a)
        v = lambda z: bubble_value(bubble, z)
        residual = fd_laplacian(v, points) + np.exp(v(points))
        assert np.abs(residual).max() < 1e-5

    def test_potential_is_exp_of_standard_bubble(self, points):
        assert np.allclose(bubble_potential(points), np.exp(bubble_value(EntireBubble(), points)), rtol=1e-13)


class TestTestFunctions:
    """Test suite for η₁ and η₂."""

    def test_eta1_equation(self, points):
        eta = lambda z: liouville.test_eta1(z)
        lhs = fd_laplacian(eta, points) + bubble_potential(points) * eta(points)
        assert np.abs(lhs + bubble_potential(points)).max() < 1e-6

    def test_eta2_equation(self, points):
        eta = lambda z: liouville.test_eta2(z)
        lhs = fd_laplacian(eta, points) + bubble_potential(points) * eta(points)
        r2 = (points ** 2).sum(axis=1)
        target = 16.0 * kernel_value(0, points) / (1.0 + r2) ** 2
        assert np.abs(lhs - target).max() < 1e-6

    def test_eta2_logarithmic_growth(self):
        r = np.geomspace(1e-3, 1e4, 200)
        z = np.stack([r, np.zeros_like(r)], axis=1)
        bound = (8.0 / 3.0) * (1.0 + np.log1p(r))
        assert np.all(np.abs(liouville.test_eta2(z)) <= bound + 1e-12)
        assert liouville.test_eta2(np.array([0.0, 0.0])) == pytest.approx(8.0 / 3.0)


class TestRadialQuadrature:
    """Test suite for the radial integrals."""

    def test_bubble_mass(self):
        assert radial_integral("mass") == pytest.approx(8 * math.pi, abs=1e-8)

    def test_dilation_kernel_orthogonal_to_potential(self):
        assert abs(radial_integral("y0_weight")) < 1e-8

    def test_translation_kernel_integrals(self):
        assert radial_integral("y1_weight") == pytest.approx(2 * math.pi / 3, abs=1e-8)
        assert radial_integral("y1_energy") == pytest.approx(4 * math.pi / 3, abs=1e-8)

    def test_weight_square_integrable(self):
        alpha = 0.25
        exact = 2 * math.pi / (alpha * (1 + alpha))
        assert radial_integral("rho_sq", alpha=alpha) == pytest.approx(exact, rel=1e-9)
        assert radial_integral("rho_sq", 50.0, alpha) == pytest.approx(radial_integral("rho_sq", 100.0, alpha), rel=1e-9)

    def test_truncated_mass_with_tail(self):
        assert radial_integral("mass", 3.0) == pytest.approx(8 * math.pi, abs=1e-8)

    def test_bare_mass_converges_under_doubling(self):
        gaps = []
        for r_max in (25.0, 50.0, 100.0, 200.0):
            bare = radial_integral("mass", r_max, with_tail=False)
            assert bare == pytest.approx(8 * math.pi * r_max ** 2 / (1 + r_max ** 2), rel=1e-10)
            gaps.append(8 * math.pi - bare)
        for coarse, fine in zip(gaps, gaps[1:]):
            assert 0.2 < fine / coarse < 0.3

    def test_bare_translation_weight_converges(self):
        coarse = radial_integral("y1_weight", 50.0, with_tail=False)
        fine = radial_integral("y1_weight", 100.0, with_tail=False)
        assert fine == pytest.approx(coarse, rel=1e-5)
        assert fine == pytest.approx(2 * math.pi / 3, rel=1e-5)

    def test_bare_weight_gap_is_the_tail(self):
        alpha = 0.25
        exact = 2 * math.pi / (alpha * (1 + alpha))
        previous = math.inf
        for r_max in (50.0, 100.0, 200.0):
            gap = exact - radial_integral("rho_sq", r_max, alpha, with_tail=False)
            u = 1.0 + r_max
            assert gap == pytest.approx(2 * math.pi * (u ** -alpha / alpha - u ** (-1 - alpha) / (1 + alpha)), rel=1e-8)
            assert gap < previous
            previous = gap

    def test_unknown_integrand(self):
        with pytest.raises(ConfigError, match="unknown"):
            radial_integral("nope")
