"""
Errors Module

This module defines the exception hierarchy shared by the solvers and the
command-line front end. Every error carries the process exit code the CLI
reports and an optional dictionary of diagnostics.
"""

from typing import Any, Dict, Optional


class BubblingError(Exception):
    """Base class for all failures raised by the bubbling package."""

    exit_code = 3

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "details": self.details,
        }


class ConfigError(BubblingError, ValueError):
    """Invalid configuration value or unknown configuration key."""

    exit_code = 2


class RhoForbidden(ConfigError):
    """The mass parameter sits on the forbidden lattice 8πℕ or below 8π."""


class NonZeroMean(BubblingError):
    """An operation that requires a mean-zero field received one that is not."""


class NoConvergence(BubblingError):
    """An iterative solve exhausted its iteration budget."""


class LinearNoConvergence(NoConvergence):
    """The Krylov solve of a linear system missed its residual target."""


class ContractionDiverged(NoConvergence):
    """The fixed-point iteration left the admissible ball or ran out of steps."""


class OutsideBall(ContractionDiverged):
    """The converged fixed point violates the ball bound on ‖φ‖∞ + ‖φ‖_X."""


class QAdjustDiverged(NoConvergence):
    """The outer Newton iteration on the bubble location did not converge."""


class MaxNotInCore(BubblingError):
    """The maximum of the scaled profile is too far from the collapse point."""


class FitRefused(BubblingError):
    """A rate fit was requested with fewer than three usable points."""


class UnderResolved(BubblingError):
    """The grid cannot resolve the bubble core."""

    exit_code = 4


class ResidualIncrease(BubblingError):
    """A trial Newton step increased the residual; the step is halved."""
