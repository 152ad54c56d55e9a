"""Call centre configuration: stock parameter set plus JSON loading.

The defaults describe the two-staff, two-inquiry-type centre used throughout:
type 0 calls arrive more often and abandon sooner, staff 0 is the type 0
specialist, staff 1 the type 1 specialist. All times are in seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import IntEnum

from .errors import ConfigError
from .validation import (
    as_float_tuple,
    check_choice,
    check_count,
    check_fraction,
    check_length,
    check_positive,
)

TRANSITION_MODELS = ("embedded", "literal")


class InquiryType(IntEnum):
    TYPE0 = 0
    TYPE1 = 1


@dataclass(frozen=True)
class SimConfig:
    """Immutable simulation parameters; safe to share across threads/processes.

    ``abandonment_mean`` entries may be ``inf`` to disable abandonment for a
    type (the patience timer then never fires). ``service_mean`` is indexed
    ``[staff][inquiry_type]``.
    """

    inter_arrival_mean: tuple[float, ...] = (100.0, 120.0)
    abandonment_mean: tuple[float, ...] = (300.0, 400.0)
    service_mean: tuple[tuple[float, ...], ...] = ((120.0, 190.0), (150.0, 170.0))
    episode_length: float = 28_800.0
    max_queue_len: int = 14
    n_staff: int = 2
    discount: float = 0.99
    vi_tolerance: float = 1e-6
    transition_model: str = "embedded"
    master_seed: int | None = None

    @property
    def n_types(self) -> int:
        return len(self.inter_arrival_mean)

    def validate(self) -> "SimConfig":
        """Raise ConfigError naming the offending field; return self when valid."""
        n_types = check_count("inter_arrival_mean length", self.n_types)
        check_count("n_staff", self.n_staff)
        check_count("max_queue_len", self.max_queue_len)
        as_float_tuple("inter_arrival_mean", self.inter_arrival_mean)
        check_length("abandonment_mean", self.abandonment_mean, n_types)
        as_float_tuple("abandonment_mean", self.abandonment_mean, allow_inf=True)
        check_length("service_mean", self.service_mean, self.n_staff)
        for staff, row in enumerate(self.service_mean):
            check_length(f"service_mean[{staff}]", row, n_types)
            as_float_tuple(f"service_mean[{staff}]", row)
        check_positive("episode_length", self.episode_length)
        check_fraction("discount", self.discount)
        check_positive("vi_tolerance", self.vi_tolerance)
        check_choice("transition_model", self.transition_model, TRANSITION_MODELS)
        if self.master_seed is not None and int(self.master_seed) != self.master_seed:
            raise ConfigError(f"master_seed: must be an integer, got {self.master_seed!r}")
        return self

    def with_overrides(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs).validate()

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config root: expected an object, got {type(data).__name__}")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")

        kwargs: dict = {}
        if "inter_arrival_mean" in data:
            kwargs["inter_arrival_mean"] = as_float_tuple(
                "inter_arrival_mean", data["inter_arrival_mean"]
            )
        if "abandonment_mean" in data:
            kwargs["abandonment_mean"] = as_float_tuple(
                "abandonment_mean", data["abandonment_mean"], allow_inf=True
            )
        if "service_mean" in data:
            rows = data["service_mean"]
            if not isinstance(rows, (list, tuple)):
                raise ConfigError("service_mean: expected a list of per-staff rows")
            kwargs["service_mean"] = tuple(
                as_float_tuple(f"service_mean[{i}]", row) for i, row in enumerate(rows)
            )
            # staff count follows the service table unless given explicitly
            kwargs["n_staff"] = data.get("n_staff", len(rows))
        for name in ("episode_length", "max_queue_len", "n_staff", "discount",
                     "vi_tolerance", "transition_model", "master_seed"):
            if name in data:
                kwargs[name] = data[name]
        return cls(**kwargs).validate()

    def to_dict(self) -> dict:
        return {
            "inter_arrival_mean": list(self.inter_arrival_mean),
            "abandonment_mean": [None if math.isinf(v) else v for v in self.abandonment_mean],
            "service_mean": [list(row) for row in self.service_mean],
            "episode_length": self.episode_length,
            "max_queue_len": self.max_queue_len,
            "n_staff": self.n_staff,
            "discount": self.discount,
            "vi_tolerance": self.vi_tolerance,
            "transition_model": self.transition_model,
            "master_seed": self.master_seed,
        }


def load_config(path) -> SimConfig:
    """Parse a JSON config file; omitted fields take the stock defaults."""
    try:
        with open(path, "r", encoding="utf-8") as fp:
            data = json.load(fp)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return SimConfig.from_dict(data)


def save_config(cfg: SimConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(cfg.to_dict(), fp, indent=2, sort_keys=True)
        fp.write("\n")
