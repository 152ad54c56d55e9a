"""Routing policies behind one small interface, plus the shared policy-file
format.

Every policy implements ``act(obs, rng) -> action``. Stochastic policies also
expose per-state probabilities and log-probabilities over the dense state
index from :mod:`callroute.domain`. Policy files are plain JSON with a mode
tag: ``deterministic`` files carry one action per state, ``logits`` files a
per-state logit row (and optionally a value baseline), so planner output and
learned policies share one container.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .config import SimConfig
from .domain import ObsState, n_obs_states, state_encoder
from .errors import InvalidParameterError, PolicyFileError
from .rng import RngStream

POLICY_SCHEMA = "routing-policy/1"
STATE_INDEXING = "queues-major-type-minor"


def softmax_probs(logits) -> np.ndarray:
    """Exp-normalised probabilities, stabilised by max subtraction."""
    arr = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"logits must be finite, got {arr}")
    shifted = np.exp(arr - arr.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def entropy(probs) -> float:
    """Shannon entropy -sum(p ln p) in nats; zero-probability terms contribute 0."""
    arr = np.asarray(probs, dtype=float)
    nonzero = arr > 0.0
    return float(-(arr[nonzero] * np.log(arr[nonzero])).sum())


class Policy:
    """Behaviour contract: map an observation (and an action-noise stream) to
    a staff index. Policies are read-only during evaluation."""

    def act(self, obs: ObsState, rng: RngStream) -> int:
        raise NotImplementedError


class RandomPolicy(Policy):
    """Uniform routing, ignoring the observation."""

    def __init__(self, n_actions: int = 2):
        self.n_actions = n_actions

    def act(self, obs: ObsState, rng: RngStream) -> int:
        return rng.choice_index(self.n_actions)


class TabularPolicy(Policy):
    """Deterministic lookup table over the dense state index."""

    def __init__(self, actions, cfg: SimConfig):
        self.actions = np.asarray(actions, dtype=np.int64)
        self.cfg = cfg
        if self.actions.shape != (n_obs_states(cfg),):
            raise InvalidParameterError(
                f"action table has shape {self.actions.shape}, "
                f"expected ({n_obs_states(cfg)},)"
            )
        if self.actions.min() < 0 or self.actions.max() >= cfg.n_staff:
            raise InvalidParameterError("action table contains out-of-range staff ids")
        self._encode = state_encoder(cfg)

    def act(self, obs: ObsState, rng: RngStream) -> int:
        return int(self.actions[self._encode(obs)])

    # the encoder closure is rebuilt on unpickle (worker processes)
    def __getstate__(self):
        return {k: v for k, v in self.__dict__.items() if k != "_encode"}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._encode = state_encoder(self.cfg)


class SoftmaxPolicy(Policy):
    """Tabular softmax policy with a per-state value baseline.

    The observation space is small enough that a (states x actions) logit
    table is an exact parameterisation; no function approximation is needed.
    """

    def __init__(self, logits, values, cfg: SimConfig):
        self.logits = np.asarray(logits, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.cfg = cfg
        expected = (n_obs_states(cfg), cfg.n_staff)
        if self.logits.shape != expected:
            raise InvalidParameterError(
                f"logit table has shape {self.logits.shape}, expected {expected}"
            )
        if self.values.shape != (expected[0],):
            raise InvalidParameterError(
                f"value table has shape {self.values.shape}, expected ({expected[0]},)"
            )
        self._encode = state_encoder(cfg)

    @classmethod
    def uniform(cls, cfg: SimConfig) -> "SoftmaxPolicy":
        n = n_obs_states(cfg)
        return cls(np.zeros((n, cfg.n_staff)), np.zeros(n), cfg)

    def probs(self, state_index: int) -> np.ndarray:
        return softmax_probs(self.logits[state_index])

    def log_prob(self, state_index: int, action: int) -> float:
        row = self.logits[state_index]
        m = row.max()
        return float(row[action] - m - math.log(np.exp(row - m).sum()))

    def act(self, obs: ObsState, rng: RngStream) -> int:
        p = self.probs(self._encode(obs))
        u = rng.uniform()
        acc = 0.0
        for a in range(len(p) - 1):
            acc += p[a]
            if u < acc:
                return a
        return len(p) - 1

    def greedy(self) -> TabularPolicy:
        """Deterministic argmax snapshot of the current logits."""
        return TabularPolicy(np.argmax(self.logits, axis=1), self.cfg)

    def __getstate__(self):
        return {k: v for k, v in self.__dict__.items() if k != "_encode"}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._encode = state_encoder(self.cfg)


def save_policy(policy: Policy, path) -> None:
    """Write a policy file (``deterministic`` or ``logits`` mode)."""
    if isinstance(policy, TabularPolicy):
        payload = {"mode": "deterministic", "actions": policy.actions.tolist()}
        cfg = policy.cfg
    elif isinstance(policy, SoftmaxPolicy):
        payload = {
            "mode": "logits",
            "logits": policy.logits.tolist(),
            "values": policy.values.tolist(),
        }
        cfg = policy.cfg
    else:
        raise PolicyFileError(f"policy of type {type(policy).__name__} is not serialisable")
    payload.update({
        "schema": POLICY_SCHEMA,
        "indexing": STATE_INDEXING,
        "state_count": n_obs_states(cfg),
        "n_actions": cfg.n_staff,
        "n_types": cfg.n_types,
        "max_queue_len": cfg.max_queue_len,
    })
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(payload, fp, sort_keys=True)
        fp.write("\n")


def load_policy(path, cfg: SimConfig) -> Policy:
    """Read a policy file and check it against the configuration; raises
    :class:`PolicyFileError` naming the offending field."""
    try:
        with open(path, "r", encoding="utf-8") as fp:
            data = json.load(fp)
    except OSError as exc:
        raise PolicyFileError(f"cannot read policy file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise PolicyFileError(f"policy file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise PolicyFileError("policy root: expected an object")

    def require(field, expected=None):
        if field not in data:
            raise PolicyFileError(f"{field}: missing from policy file")
        if expected is not None and data[field] != expected:
            raise PolicyFileError(
                f"{field}: file has {data[field]!r}, config requires {expected!r}"
            )
        return data[field]

    require("schema", POLICY_SCHEMA)
    require("indexing", STATE_INDEXING)
    require("state_count", n_obs_states(cfg))
    require("n_actions", cfg.n_staff)
    require("n_types", cfg.n_types)
    require("max_queue_len", cfg.max_queue_len)
    mode = require("mode")

    if mode == "deterministic":
        actions = require("actions")
        if len(actions) != n_obs_states(cfg):
            raise PolicyFileError(
                f"actions: length {len(actions)} != state_count {n_obs_states(cfg)}"
            )
        try:
            return TabularPolicy(actions, cfg)
        except InvalidParameterError as exc:
            raise PolicyFileError(f"actions: {exc}") from None
    if mode == "logits":
        logits = require("logits")
        values = data.get("values", [0.0] * n_obs_states(cfg))
        try:
            return SoftmaxPolicy(logits, values, cfg)
        except (InvalidParameterError, ValueError) as exc:
            raise PolicyFileError(f"logits: {exc}") from None
    raise PolicyFileError(f"mode: unknown policy mode {mode!r}")
