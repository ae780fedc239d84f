"""
Shared pytest fixtures.

Expensive objects (Green evaluators, collapse problems, reduction frames) are
session-scoped; tests treat them as read-only.
"""

import math

import numpy as np
import pytest

from bubbling.base_state import BaseSolution
from bubbling.bubble_ansatz import assemble_ansatz, derive_params
from bubbling.config import ProblemConfig
from bubbling.diagnostics import build_problem
from bubbling.greens import GreenEvaluator
from bubbling.reduction import build_frame
from bubbling.torus_spectral import PeriodicField, make_grid

# t = 0.2 keeps the bubble core resolvable on a 256-grid
FAST_SETTINGS = {"t": 0.2, "R0": 2.2, "r0": 0.45, "t_list": "0.2,0.18,0.16", "max_grid_n": 512}
# End-to-end setting for the nonlinear solve
SLOW_SETTINGS = {"t": 0.12, "R0": 2.2, "r0": 0.3, "t_list": "0.12,0.11,0.1", "grid_n": 512}


def flat_base(rho: float = 12.0 * math.pi, n: int = 64) -> BaseSolution:
    """For h ≡ 1 the base state is exactly w ≡ 0."""
    return BaseSolution(w=PeriodicField(grid=make_grid(n), values=np.zeros((n, n))), rho=rho, residual=0.0)


def smooth_meanzero(n: int, seed: int = 0, modes: int = 4) -> np.ndarray:
    """A random low-mode trigonometric field with zero mean."""
    rng = np.random.default_rng(seed)
    axis = np.arange(n) / n
    values = np.zeros((n, n))
    for _ in range(modes):
        k1, k2 = rng.integers(0, 4, size=2)
        a1, a2 = rng.uniform(0.0, 2.0 * math.pi, size=2)
        values += rng.standard_normal() * np.outer(np.cos(2.0 * math.pi * k1 * axis + a1),
                                                   np.cos(2.0 * math.pi * k2 * axis + a2))
    return values - values.mean()


@pytest.fixture(scope="session")
def greens128():
    return GreenEvaluator(make_grid(128))


@pytest.fixture(scope="session")
def fast_config():
    return ProblemConfig.model_validate(FAST_SETTINGS)


@pytest.fixture(scope="session")
def fast_problem(fast_config):
    return build_problem(fast_config, flat_base())


@pytest.fixture(scope="session")
def fast_ansatz(fast_problem):
    params = derive_params(fast_problem, (0.0, 0.0))
    return assemble_ansatz(fast_problem, params)


@pytest.fixture(scope="session")
def fast_frame(fast_problem, fast_ansatz, fast_config):
    return build_frame(fast_problem, fast_ansatz, fast_config.p, fast_config.alpha)


@pytest.fixture(scope="session")
def slow_problem():
    config = ProblemConfig.model_validate(SLOW_SETTINGS)
    return build_problem(config, flat_base())
