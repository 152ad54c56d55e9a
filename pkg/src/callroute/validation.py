"""Small input-validation helpers used by configs, estimators and file loaders."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

from .errors import ConfigError


def check_positive(name: str, value: float, allow_inf: bool = False) -> float:
    value = float(value)
    if math.isnan(value) or value <= 0:
        raise ConfigError(f"{name}: must be > 0, got {value}")
    if math.isinf(value) and not allow_inf:
        raise ConfigError(f"{name}: must be finite, got {value}")
    return value


def check_fraction(name: str, value: float) -> float:
    """A value in the half-open unit interval [0, 1), e.g. a discount factor."""
    value = float(value)
    if not (0.0 <= value < 1.0):
        raise ConfigError(f"{name}: must lie in [0, 1), got {value}")
    return value


def check_count(name: str, value: int, minimum: int = 1) -> int:
    if int(value) != value:
        raise ConfigError(f"{name}: must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {value}")
    return value


def check_length(name: str, seq: Sequence, expected: int) -> Sequence:
    if len(seq) != expected:
        raise ConfigError(f"{name}: expected {expected} entries, got {len(seq)}")
    return seq


def check_choice(name: str, value: str, choices: Iterable[str]) -> str:
    choices = tuple(choices)
    if value not in choices:
        raise ConfigError(f"{name}: must be one of {choices}, got {value!r}")
    return value


def as_float_tuple(name: str, seq, allow_inf: bool = False) -> tuple[float, ...]:
    """Coerce a sequence of means to floats; None entries become +inf (disabled timer)."""
    try:
        values = tuple(math.inf if v is None else float(v) for v in seq)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: not a sequence of numbers ({exc})") from None
    for v in values:
        check_positive(name, v, allow_inf=allow_inf)
    return values
