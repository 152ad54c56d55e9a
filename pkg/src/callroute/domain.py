"""Shared domain types and the dense state indexing used by tabular policies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .config import SimConfig
from .errors import InvalidStateError


@dataclass(frozen=True)
class ObsState:
    """Decision-epoch observation: per-staff queue lengths plus the inquiry
    type of the call being routed. Queue lengths count the client in service.
    """

    queues: tuple[int, ...]
    tau: int

    @property
    def n0(self) -> int:
        return self.queues[0]

    @property
    def n1(self) -> int:
        return self.queues[1]


@dataclass(frozen=True)
class EpisodeMetrics:
    """Per-episode outcome counters collected after the event queue drains.

    ``wait_sum``/``wait_count`` cover served clients only (time from arrival
    to service start); queueing time of abandoned clients is kept separately
    in ``abandoned_wait_sum``. ``idle_seconds`` is clipped to the working day.
    """

    total_reward: float
    arrivals: int
    served: int
    abandoned: int
    rejected: int
    wait_sum: float
    wait_count: int
    idle_seconds: tuple[float, ...]
    abandoned_wait_sum: float

    @property
    def mean_wait(self) -> float:
        return self.wait_sum / self.wait_count if self.wait_count else 0.0


def n_obs_states(cfg: SimConfig) -> int:
    """Size of the dense observation index: (max_queue_len+1)^n_staff * n_types."""
    return (cfg.max_queue_len + 1) ** cfg.n_staff * cfg.n_types


def encode_state(obs: ObsState, cfg: SimConfig) -> int:
    """Dense index of an observation.

    Queue lengths are the major digits (staff 0 most significant) and the
    inquiry type the minor digit, i.e. for two staff:
    ``(n0 * (max_queue_len + 1) + n1) * n_types + tau``. The mapping is a
    bijection onto ``range(n_obs_states(cfg))``; this layout is the contract
    policy files rely on.
    """
    if len(obs.queues) != cfg.n_staff:
        raise InvalidStateError(
            f"observation has {len(obs.queues)} queues, config has {cfg.n_staff} staff"
        )
    base = cfg.max_queue_len + 1
    index = 0
    for n in obs.queues:
        if not 0 <= n <= cfg.max_queue_len:
            raise InvalidStateError(f"queue length {n} outside [0, {cfg.max_queue_len}]")
        index = index * base + n
    if not 0 <= obs.tau < cfg.n_types:
        raise InvalidStateError(f"inquiry type {obs.tau} outside [0, {cfg.n_types})")
    return index * cfg.n_types + obs.tau


def decode_state(index: int, cfg: SimConfig) -> ObsState:
    """Inverse of :func:`encode_state`."""
    if not 0 <= index < n_obs_states(cfg):
        raise InvalidStateError(f"state index {index} outside [0, {n_obs_states(cfg)})")
    index, tau = divmod(index, cfg.n_types)
    base = cfg.max_queue_len + 1
    queues = [0] * cfg.n_staff
    for i in range(cfg.n_staff - 1, -1, -1):
        index, queues[i] = divmod(index, base)
    return ObsState(tuple(queues), tau)


def state_encoder(cfg: SimConfig) -> Callable[[ObsState], int]:
    """Unchecked encoder for hot loops; observations coming out of the
    environment already satisfy their bounds."""
    base = cfg.max_queue_len + 1
    n_types = cfg.n_types
    if cfg.n_staff == 2:
        def encode(obs: ObsState) -> int:
            q = obs.queues
            return (q[0] * base + q[1]) * n_types + obs.tau
        return encode

    def encode(obs: ObsState) -> int:
        index = 0
        for n in obs.queues:
            index = index * base + n
        return index * n_types + obs.tau
    return encode


def staff_mean_service(cfg: SimConfig, staff: int) -> float:
    """Unweighted mean of one staff member's service means across inquiry types."""
    if not 0 <= staff < cfg.n_staff:
        raise InvalidStateError(f"staff id {staff} outside [0, {cfg.n_staff})")
    row = cfg.service_mean[staff]
    return sum(row) / len(row)
