"""
Configuration Module

This module handles configuration for the bubbling laboratory:
environment-level settings read from a `.env` file and problem settings
read from a UTF-8 key=value file. Problem files are parsed with
python-dotenv and validated by the `ProblemConfig` pydantic model, which
rejects unknown keys.
"""

import math
import os
from typing import Any, Dict, List, Optional, Tuple

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .errors import ConfigError

# Load environment variables
load_dotenv()

# Environment constants
OUTPUT_DIR = os.getenv("BUBBLE_OUTPUT_DIR", "output")
LOG_LEVEL = os.getenv("BUBBLE_LOG_LEVEL", "INFO")
SHOW_PROGRESS = os.getenv("BUBBLE_PROGRESS", "1") not in ("0", "false", "False")
EWALD_SIGMA = float(os.getenv("BUBBLE_EWALD_SIGMA", "0.05"))

# Problem defaults
DEFAULT_RHO = 12.0 * math.pi
DEFAULT_T_LIST = (0.12, 0.10, 0.08, 0.06)
MIN_GRID_N = 16
# ‖φ‖∞ + ‖φ‖_X ≤ BALL_CONSTANT · t^{2/p}|ln t|² for the fixed point
BALL_CONSTANT = 50.0


def parse_rho(value: Any) -> float:
    """
    Parse a mass parameter given as a number or as a multiple of pi.

    Args:
        value: A float, or a string such as "12pi", "12*pi", "pi" or "37.7"

    Returns:
        The numeric value of rho

    Raises:
        ConfigError: If the string cannot be parsed
    """
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().lower().replace(" ", "")
    try:
        if text.endswith("pi"):
            head = text[:-2].rstrip("*")
            coefficient = float(head) if head else 1.0
            return coefficient * math.pi
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse rho value '{value}'") from exc


def _float_list(value: Any, name: str) -> List[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    if not text:
        return []
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ValueError(f"{name} must be a comma-separated list of numbers") from exc


def _point(value: Any, name: str) -> Tuple[float, float]:
    numbers = _float_list(value, name)
    if len(numbers) != 2:
        raise ValueError(f"{name} must have exactly two components")
    return (numbers[0], numbers[1])


class ProblemConfig(BaseModel):
    """Validated problem settings; one instance drives every CLI command."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    rho: float = DEFAULT_RHO
    t: float = 0.12
    t_list: Tuple[float, ...] = DEFAULT_T_LIST
    grid_n: int = 0
    base_grid_n: int = 128
    max_grid_n: int = 2048
    R0: float = 2.5
    r0: float = 0.4
    p: float = 1.5
    alpha: float = 0.25
    eps: float = 0.25
    hstar: Tuple[str, Tuple[float, ...]] = ("const", (1.0,))
    vortices: Tuple[Tuple[float, float, int], ...] = ()
    e_dir: Tuple[float, float] = (1.0, 0.0)
    q0: Tuple[float, float] = (0.0, 0.0)
    mean_tol: float = 1e-10
    solver_tol: float = 1e-10
    newton_tol: float = 1e-11
    max_newton_iter: int = 50
    margin_tol: float = 1e-2
    lin_tol: float = 1e-9
    lin_maxiter: int = 400
    fp_tol: float = 1e-10
    max_fp_iter: int = 40
    ball_constant: float = BALL_CONSTANT
    c_tol: float = 1e-8
    max_outer: int = 12
    residual_tol: float = 1e-7
    ewald_sigma: float = EWALD_SIGMA

    @field_validator("rho", mode="before")
    @classmethod
    def _parse_rho(cls, value: Any) -> float:
        return parse_rho(value)

    @field_validator("t_list", mode="before")
    @classmethod
    def _parse_t_list(cls, value: Any) -> Tuple[float, ...]:
        values = sorted(set(_float_list(value, "t_list")), reverse=True)
        return tuple(values)

    @field_validator("e_dir", mode="before")
    @classmethod
    def _parse_e_dir(cls, value: Any) -> Tuple[float, float]:
        e1, e2 = _point(value, "e_dir")
        norm = math.hypot(e1, e2)
        if norm == 0.0:
            raise ValueError("e_dir must be nonzero")
        return (e1 / norm, e2 / norm)

    @field_validator("q0", mode="before")
    @classmethod
    def _parse_q0(cls, value: Any) -> Tuple[float, float]:
        return _point(value, "q0")

    @field_validator("hstar", mode="before")
    @classmethod
    def _parse_hstar(cls, value: Any) -> Tuple[str, Tuple[float, ...]]:
        if isinstance(value, (list, tuple)):
            kind, params = value
            return (str(kind), tuple(float(v) for v in params))
        kind, _, rest = str(value).strip().partition(":")
        kind = kind.strip().lower()
        params = tuple(_float_list(rest, "hstar"))
        if kind == "const" and len(params) == 1 and params[0] > 0:
            return (kind, params)
        if kind == "cos" and len(params) == 2:
            return (kind, params)
        raise ValueError("hstar must be 'const:c' with c > 0 or 'cos:c1,c2'")

    @field_validator("vortices", mode="before")
    @classmethod
    def _parse_vortices(cls, value: Any) -> Tuple[Tuple[float, float, int], ...]:
        if isinstance(value, (list, tuple)):
            return tuple((float(a), float(b), int(c)) for a, b, c in value)
        entries = []
        for chunk in str(value).split(";"):
            if not chunk.strip():
                continue
            numbers = _float_list(chunk, "vortices")
            if len(numbers) != 3 or numbers[2] != int(numbers[2]) or numbers[2] < 1:
                raise ValueError("each vortex must be 'x1,x2,alpha' with a positive integer alpha")
            entries.append((numbers[0] % 1.0, numbers[1] % 1.0, int(numbers[2])))
        return tuple(entries)

    @model_validator(mode="after")
    def _check_ranges(self) -> "ProblemConfig":
        if not 2.0 < self.R0:
            raise ValueError("R0 must exceed 2")
        if not 0.0 < self.r0 < 0.5:
            raise ValueError("r0 must lie in (0, 1/2)")
        if not 1.0 < self.p <= 2.0:
            raise ValueError("p must lie in (1, 2]")
        if not 0.0 < self.alpha < min(0.5, 4.0 * (self.p - 1.0) / self.p):
            raise ValueError("alpha must lie in (0, min(1/2, 4(p-1)/p))")
        if not 0.0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")
        if self.grid_n and (self.grid_n % 2 or self.grid_n < MIN_GRID_N):
            raise ValueError("grid_n must be 0 (automatic) or an even integer >= 16")
        if self.base_grid_n % 2 or self.base_grid_n < MIN_GRID_N:
            raise ValueError("base_grid_n must be an even integer >= 16")
        if not self.ball_constant >= 1.0:
            raise ValueError("ball_constant must be at least 1")
        if not 0.0 < self.ewald_sigma <= 0.06:
            raise ValueError("ewald_sigma must lie in (0, 0.06]")
        for t in (self.t,) + tuple(self.t_list):
            if not 0.0 < t < 0.25:
                raise ValueError(f"t = {t} must lie in (0, 1/4)")
            if not t * self.R0 < self.r0:
                raise ValueError(f"t*R0 = {t * self.R0:.4g} must be smaller than r0 = {self.r0}")
        return self

    def for_t(self, t: float) -> "ProblemConfig":
        """Return a copy of the configuration focused on one collapse parameter."""
        return self.model_validate({**self.model_dump(), "t": t})


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ProblemConfig:
    """
    Load and validate a problem configuration.

    Args:
        path: Optional path to a key=value file; defaults are used when omitted
        overrides: Optional values that take precedence over the file

    Returns:
        A validated ProblemConfig

    Raises:
        ConfigError: If the file is missing, a value is malformed, or a key is unknown
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"configuration file not found: {path}")
        for key, value in dotenv_values(path, encoding="utf-8").items():
            if value is None:
                raise ConfigError(f"configuration key '{key}' has no value")
            raw[key] = value
    raw.update(overrides or {})
    try:
        return ProblemConfig.model_validate(raw)
    except ValidationError as exc:
        problems = [
            f"{'.'.join(str(loc) for loc in err['loc']) or 'config'}: {err['msg']}"
            for err in exc.errors()
        ]
        raise ConfigError("invalid configuration: " + "; ".join(problems), {"errors": problems}) from exc


def config_summary(config: ProblemConfig) -> Dict[str, Any]:
    """JSON-friendly view of a configuration for report headers."""
    data = config.model_dump()
    data["rho_over_pi"] = config.rho / math.pi
    return data
