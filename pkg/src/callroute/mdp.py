"""Explicit finite MDP of the routing problem.

States pair the queue-length vector with a phase: one routing phase per
inquiry type (an action is required) plus an internal phase for the
non-decision epochs between arrivals. Two transition kernels are available:

  - ``embedded``: the jump chain of the continuous-time queue. After the
    deterministic routing update, the next event is drawn by competing
    exponential clocks (arrivals, service completions, abandonments), each
    with probability rate/total. This is the default: it uses every
    configured rate and makes queues drain.
  - ``literal``: a degenerate single-successor kernel in which routing simply
    increments the chosen queue with probability one and the phase never
    changes. Kept for comparison; queues never drain under it.

Decision rewards charge a flat shared penalty for routing to a full queue or
to a busy staff member while another is idle, and otherwise the expected wait
ahead of the newcomer (queue length times that staff's mean service time,
negated). The penalty is the rounded across-staff average of mean service
times (158 under the stock configuration).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product
from typing import NamedTuple

import numpy as np

from .config import SimConfig
from .domain import staff_mean_service
from .errors import InvalidStateError
from .validation import check_choice


class TheoreticalState(NamedTuple):
    queues: tuple[int, ...]
    phase: int  # 0..n_types-1: routing a call of that type; n_types: internal

    def is_decision(self, n_types: int) -> bool:
        return self.phase < n_types


class RateVector(NamedTuple):
    """Active exponential rates out of a queue configuration."""

    arrival: tuple[float, ...]   # one per inquiry type, always active
    service: tuple[float, ...]   # one per staff, zero when the queue is empty
    abandon: tuple[float, ...]   # one per staff: max(n-1, 0) * mixed rate

    @property
    def total(self) -> float:
        return sum(self.arrival) + sum(self.service) + sum(self.abandon)


def shared_penalty(cfg: SimConfig) -> float:
    """Flat penalty for plainly poor routing: across-staff average of mean
    service times, rounded half-up. Identical for both staff by construction,
    which keeps the reward symmetric under staff relabelling."""
    mean = sum(staff_mean_service(cfg, s) for s in range(cfg.n_staff)) / cfg.n_staff
    return float(math.floor(mean + 0.5))


def mixed_abandon_rate(cfg: SimConfig) -> float:
    """Per-client abandonment rate, averaged over the arrival mix.

    The state does not track which types are waiting in a queue, so the
    per-type patience rates are blended with arrival-probability weights.
    """
    lam = [1.0 / m for m in cfg.inter_arrival_mean]
    lam_total = sum(lam)
    return sum((l / lam_total) / mean for l, mean in zip(lam, cfg.abandonment_mean))


def event_rates(queues: tuple[int, ...], cfg: SimConfig) -> RateVector:
    """Rates of the competing clocks at a queue configuration: arrivals per
    type, a service rate per busy staff, and abandonment at rate
    max(n-1, 0) * mixed rate per staff (the client in service cannot leave)."""
    for n in queues:
        if not 0 <= n <= cfg.max_queue_len:
            raise InvalidStateError(f"queue length {n} outside [0, {cfg.max_queue_len}]")
    theta = mixed_abandon_rate(cfg)
    arrival = tuple(1.0 / m for m in cfg.inter_arrival_mean)
    service = tuple(1.0 / staff_mean_service(cfg, s) if queues[s] > 0 else 0.0
                    for s in range(cfg.n_staff))
    abandon = tuple(max(queues[s] - 1, 0) * theta for s in range(cfg.n_staff))
    return RateVector(arrival, service, abandon)


def reward_theoretical(state: TheoreticalState, action: int, cfg: SimConfig) -> float:
    """Decision reward, cases checked top-down:

    1. routed queue already full            -> -penalty
    2. routed staff busy, another one idle  -> -penalty
    3. otherwise                            -> -(queue length) * (mean service)

    Case 3 is the expected wait ahead of the newcomer; with an idle target it
    is zero. Only defined in routing phases.
    """
    if not state.is_decision(cfg.n_types):
        raise InvalidStateError("internal states carry no decision reward")
    if not 0 <= action < cfg.n_staff:
        raise InvalidStateError(f"action {action} outside [0, {cfg.n_staff})")
    n_target = state.queues[action]
    penalty = shared_penalty(cfg)
    if n_target >= cfg.max_queue_len:
        return -penalty
    if n_target > 0 and any(state.queues[s] == 0 for s in range(cfg.n_staff) if s != action):
        return -penalty
    return -float(n_target) * staff_mean_service(cfg, action)


@dataclass
class MdpModel:
    """Enumerated states with per-action rewards and sparse transitions.

    Internal states expose a single no-op action stored in slot 0; the
    validity mask marks the rest unavailable. ``obs_index`` maps each routing
    state to the dense observation index shared with policy tables (-1 for
    internal states). Immutable once built; safe to share.
    """

    cfg: SimConfig
    mode: str
    states: list[TheoreticalState]
    rewards: np.ndarray        # (S, A)
    action_valid: np.ndarray   # (S, A) bool
    obs_index: np.ndarray      # (S,) int, -1 for internal states
    trans_rows: list[np.ndarray]    # per action: source state of each entry
    trans_cols: list[np.ndarray]    # per action: successor state
    trans_probs: list[np.ndarray]   # per action: probability
    trans_indptr: list[np.ndarray]  # per action: CSR index into the above

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]

    def transitions(self, state: int, action: int) -> list[tuple[int, float]]:
        ptr = self.trans_indptr[action]
        lo, hi = ptr[state], ptr[state + 1]
        return list(zip(self.trans_cols[action][lo:hi].tolist(),
                        self.trans_probs[action][lo:hi].tolist()))

    def state_index(self, state: TheoreticalState) -> int:
        return self._index[state]

    def __post_init__(self):
        self._index = {s: i for i, s in enumerate(self.states)}

    def dump(self, path) -> None:
        """Write one JSON line per (state, action) with reward and successor
        list, for inspection and diffing."""
        with open(path, "w", encoding="utf-8") as fp:
            for i, state in enumerate(self.states):
                for a in range(self.n_actions):
                    if not self.action_valid[i, a]:
                        continue
                    fp.write(json.dumps({
                        "state": list(state.queues) + [state.phase],
                        "action": a,
                        "reward": float(self.rewards[i, a]),
                        "next": [[int(j), p] for j, p in self.transitions(i, a)],
                    }, sort_keys=True))
                    fp.write("\n")


def build_model(cfg: SimConfig, mode: str | None = None) -> MdpModel:
    """Enumerate the full model for the configuration.

    Embedded mode also enumerates internal states (state count
    ``(max+1)^staff * (types+1)``, 675 under the stock configuration); literal
    mode only has the routing states (450).
    """
    cfg.validate()
    mode = check_choice("transition_model", mode or cfg.transition_model,
                        ("embedded", "literal"))
    n_types = cfg.n_types
    n_actions = cfg.n_staff
    phases = range(n_types + 1) if mode == "embedded" else range(n_types)

    states = [TheoreticalState(queues, phase)
              for queues in product(range(cfg.max_queue_len + 1), repeat=cfg.n_staff)
              for phase in phases]
    index = {s: i for i, s in enumerate(states)}

    S = len(states)
    rewards = np.zeros((S, n_actions))
    valid = np.zeros((S, n_actions), dtype=bool)
    obs_index = np.full(S, -1, dtype=np.int64)
    entries: list[list[tuple[int, int, float]]] = [[] for _ in range(n_actions)]

    def successors_embedded(queues: tuple[int, ...]) -> list[tuple[int, float]]:
        rates = event_rates(queues, cfg)
        total = rates.total
        out: dict[int, float] = {}
        for t, lam in enumerate(rates.arrival):
            j = index[TheoreticalState(queues, t)]
            out[j] = out.get(j, 0.0) + lam / total
        for s in range(cfg.n_staff):
            rate = rates.service[s] + rates.abandon[s]
            if rate > 0.0:
                down = list(queues)
                down[s] -= 1
                j = index[TheoreticalState(tuple(down), n_types)]
                out[j] = out.get(j, 0.0) + rate / total
        return sorted(out.items())

    for i, state in enumerate(states):
        if state.is_decision(n_types):
            obs_index[i] = _obs_index(state, cfg)
            for a in range(n_actions):
                valid[i, a] = True
                rewards[i, a] = reward_theoretical(state, a, cfg)
                routed = list(state.queues)
                if routed[a] < cfg.max_queue_len:
                    routed[a] += 1  # full queue: state unchanged
                routed = tuple(routed)
                if mode == "literal":
                    entries[a].append((i, index[TheoreticalState(routed, state.phase)], 1.0))
                else:
                    for j, p in successors_embedded(routed):
                        entries[a].append((i, j, p))
        else:
            valid[i, 0] = True  # single no-op, reward 0
            for j, p in successors_embedded(state.queues):
                entries[0].append((i, j, p))

    rows, cols, probs, indptr = [], [], [], []
    for a in range(n_actions):
        entries[a].sort(key=lambda e: e[0])
        r = np.array([e[0] for e in entries[a]], dtype=np.int64)
        rows.append(r)
        cols.append(np.array([e[1] for e in entries[a]], dtype=np.int64))
        probs.append(np.array([e[2] for e in entries[a]]))
        indptr.append(np.searchsorted(r, np.arange(S + 1)))

    return MdpModel(cfg=cfg, mode=mode, states=states, rewards=rewards,
                    action_valid=valid, obs_index=obs_index, trans_rows=rows,
                    trans_cols=cols, trans_probs=probs, trans_indptr=indptr)


def _obs_index(state: TheoreticalState, cfg: SimConfig) -> int:
    base = cfg.max_queue_len + 1
    idx = 0
    for n in state.queues:
        idx = idx * base + n
    return idx * cfg.n_types + state.phase
