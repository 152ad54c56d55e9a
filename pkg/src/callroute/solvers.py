"""Synchronous value iteration over the finite routing MDP.

Sweeps are Jacobi-style (each backup reads the previous sweep's values), so
the sup-norm residual contracts by at least the discount factor every sweep
and iteration counts are deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .config import SimConfig
from .domain import ObsState, encode_state
from .errors import ConvergenceError
from .mdp import MdpModel, build_model
from .policies import TabularPolicy
from .validation import check_fraction, check_positive

_NEG_INF = -np.inf


def action_values(model: MdpModel, values: np.ndarray, gamma: float) -> np.ndarray:
    """One-step lookahead Q(s, a) = R(s, a) + gamma * sum_s' P(s'|s,a) V(s');
    unavailable actions get -inf."""
    S, A = model.rewards.shape
    q = np.full((S, A), _NEG_INF)
    for a in range(A):
        contrib = model.trans_probs[a] * values[model.trans_cols[a]]
        expected = np.bincount(model.trans_rows[a], weights=contrib, minlength=S)
        qa = model.rewards[:, a] + gamma * expected
        q[:, a] = np.where(model.action_valid[:, a], qa, _NEG_INF)
    return q


def bellman_backup(model: MdpModel, values: np.ndarray, gamma: float) -> np.ndarray:
    return action_values(model, values, gamma).max(axis=1)


@dataclass
class VIResult:
    values: np.ndarray
    iterations: int
    residual: float
    residuals: list[float]  # sup-norm residual of every sweep, in order


def value_iteration(model: MdpModel, gamma: float, tol: float,
                    max_iter: int = 100_000) -> VIResult:
    """Iterate Bellman backups from V = 0 until the sup-norm residual drops
    below ``tol``.

    Raises:
        ConvergenceError: after ``max_iter`` sweeps, carrying the last residual.
    """
    check_fraction("gamma", gamma)
    check_positive("tol", tol)
    values = np.zeros(model.n_states)
    residuals: list[float] = []
    for sweep in range(1, max_iter + 1):
        updated = bellman_backup(model, values, gamma)
        residual = float(np.abs(updated - values).max())
        residuals.append(residual)
        values = updated
        if residual < tol:
            return VIResult(values, sweep, residual, residuals)
    raise ConvergenceError(
        f"value iteration did not reach tol={tol} in {max_iter} sweeps "
        f"(last residual {residuals[-1]:.3e})",
        iterations=max_iter, residual=residuals[-1],
    )


def extract_policy(model: MdpModel, values: np.ndarray, gamma: float) -> np.ndarray:
    """Greedy action per routing state, indexed by the dense observation
    index. Ties resolve to the lower staff id."""
    q = action_values(model, values, gamma)
    decision = model.obs_index >= 0
    actions = np.zeros(int(model.obs_index.max()) + 1, dtype=np.int64)
    actions[model.obs_index[decision]] = np.argmax(q[decision], axis=1)
    return actions


class ValueIterationSolver(BaseEstimator):
    """Planner with an estimator face: ``fit`` builds the model and solves it,
    ``predict`` maps observations to routing actions.

    Parameters
    ----------
    gamma : discount factor in [0, 1); None defers to the config.
    tol : sup-norm stopping tolerance; None defers to the config.
    max_iter : sweep cap before raising ConvergenceError.
    transition_model : "embedded" or "literal"; None defers to the config.
    """

    def __init__(self, gamma=None, tol=None, max_iter=100_000, transition_model=None):
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.transition_model = transition_model

    def fit(self, config: SimConfig):
        config.validate()
        gamma = config.discount if self.gamma is None else self.gamma
        tol = config.vi_tolerance if self.tol is None else self.tol
        start = time.perf_counter()
        self.model_ = build_model(config, self.transition_model)
        result = value_iteration(self.model_, gamma, tol, self.max_iter)
        actions = extract_policy(self.model_, result.values, gamma)
        self.elapsed_ = time.perf_counter() - start
        self.gamma_ = gamma
        self.values_ = result.values
        self.n_iter_ = result.iterations
        self.residual_ = result.residual
        self.residuals_ = result.residuals
        self.policy_ = TabularPolicy(actions, config)
        return self

    def predict(self, X):
        """Actions for observations: accepts ObsState instances or dense
        state indices (singly or in a sequence)."""
        if isinstance(X, ObsState):
            return int(self.policy_.actions[encode_state(X, self.policy_.cfg)])
        if isinstance(X, (int, np.integer)):
            return int(self.policy_.actions[X])
        indices = [encode_state(x, self.policy_.cfg) if isinstance(x, ObsState) else int(x)
                   for x in X]
        return self.policy_.actions[np.asarray(indices, dtype=np.int64)]
