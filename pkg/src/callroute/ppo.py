"""Clipped-surrogate policy-gradient training on the tabular softmax policy.

The loop alternates fixed-length rollout collection (crossing episode
boundaries, bootstrapping the value baseline at the cut) with several epochs
of shuffled-minibatch updates. Gradients are computed analytically on the
logit and value tables and applied as plain fixed-step ascent/descent, which
is exact and dependency-free for tabular parameters.

Rewards are scaled down inside the optimiser only (the raw penalties are in
the hundreds); the reported learning curve carries unscaled episode rewards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from .config import SimConfig
from .domain import ObsState, encode_state, state_encoder
from .env import CallCentreEnv
from .errors import TrainingDiverged
from .policies import SoftmaxPolicy
from .rng import (
    PPO_ACTION_STREAM_ID,
    PPO_SHUFFLE_STREAM_ID,
    derive_stream,
    fresh_master_seed,
)
from .validation import check_count, check_fraction, check_positive


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    epochs_per_update: int = 4
    minibatch_size: int = 256
    rollout_length: int = 4096
    learning_rate: float = 0.01
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    reward_scale: float = 0.01
    total_steps: int = 4_000_000
    anneal: bool = True  # decay learning rate and entropy bonus linearly to 0
    checkpoint_interval: int = 100  # updates between checkpoints; 0 disables

    def validate(self) -> "PpoConfig":
        check_fraction("gamma", self.gamma)
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda: must lie in [0, 1], got {self.gae_lambda}")
        check_positive("clip_epsilon", self.clip_epsilon, allow_inf=True)
        check_count("epochs_per_update", self.epochs_per_update)
        check_count("minibatch_size", self.minibatch_size)
        check_count("rollout_length", self.rollout_length)
        check_positive("learning_rate", self.learning_rate)
        check_positive("reward_scale", self.reward_scale)
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("entropy_coef and value_coef must be >= 0")
        check_count("total_steps", self.total_steps, minimum=self.rollout_length)
        check_count("checkpoint_interval", self.checkpoint_interval, minimum=0)
        return self

    def with_overrides(self, **kwargs) -> "PpoConfig":
        return replace(self, **kwargs).validate()


def compute_gae(rewards, values, dones, bootstrap_value: float,
                gamma: float, lam: float):
    """Generalized advantage estimation over one rollout.

    ``delta_t = r_t + gamma * v_{t+1} * (1 - done_t) - v_t`` accumulated
    backwards with factor ``gamma * lam``; the value after the final step is
    ``bootstrap_value`` (zero when the rollout ended an episode). Returns
    ``(advantages, returns)`` with ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if not (len(rewards) == len(values) == len(dones)):
        raise ValueError(
            f"buffer arrays must share one length, got "
            f"{len(rewards)}/{len(values)}/{len(dones)}"
        )
    T = len(rewards)
    advantages = np.empty(T)
    running = 0.0
    next_value = float(bootstrap_value)
    for t in range(T - 1, -1, -1):
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        advantages[t] = running
        next_value = values[t]
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Shift/scale to zero mean and unit standard deviation within the buffer."""
    centred = advantages - advantages.mean()
    return centred / (centred.std() + 1e-8)


def policy_objective(logits_table, states, actions, old_logp, advantages,
                     clip_epsilon: float, entropy_coef: float):
    """Clipped surrogate plus entropy bonus on one minibatch.

    Returns ``(objective, gradient)`` where the gradient has the full table's
    shape and is the exact gradient of the minibatch-mean objective, suitable
    for gradient ascent. The clipped branch propagates no gradient, as usual.
    """
    B = len(states)
    rows = logits_table[states]                       # (B, A)
    shifted = rows - rows.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    log_norm = np.log(exp.sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm                    # (B, A)
    probs = np.exp(log_probs)
    new_logp = log_probs[np.arange(B), actions]

    ratio = np.exp(new_logp - old_logp)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages
    surrogate = np.minimum(unclipped, clipped)
    ent = -(probs * log_probs).sum(axis=1)            # (B,)
    objective = float(surrogate.mean() + entropy_coef * ent.mean())

    # d surrogate / d logits flows only where the unclipped branch is active
    coef = np.where(unclipped <= clipped, unclipped, 0.0)
    onehot = np.zeros_like(probs)
    onehot[np.arange(B), actions] = 1.0
    grad_rows = coef[:, None] * (onehot - probs)
    grad_rows += entropy_coef * (-probs * (log_probs + ent[:, None]))
    gradient = np.zeros_like(logits_table)
    np.add.at(gradient, states, grad_rows / B)
    return objective, gradient


def value_objective(values_table, states, returns, value_coef: float):
    """Weighted squared error of the value baseline on one minibatch; returns
    ``(loss, gradient)`` with the gradient shaped like the full table, for
    gradient descent."""
    B = len(states)
    err = values_table[states] - returns
    loss = float(value_coef * np.mean(err ** 2))
    gradient = np.zeros_like(values_table)
    np.add.at(gradient, states, (2.0 * value_coef / B) * err)
    return loss, gradient


def ppo_update(policy: SoftmaxPolicy, states, actions, old_logp, advantages,
               returns, cfg: PpoConfig, shuffle_rng) -> dict:
    """Run the epochs-of-minibatches update in place on the policy tables.

    ``advantages`` must already be normalised to zero mean / unit deviation
    within the buffer. Raises :class:`TrainingDiverged` when an update drives
    any parameter non-finite.
    """
    T = len(states)
    lr = cfg.learning_rate
    for _ in range(cfg.epochs_per_update):
        order = shuffle_rng.permutation(T)
        for start in range(0, T, cfg.minibatch_size):
            batch = order[start:start + cfg.minibatch_size]
            _, policy_grad = policy_objective(
                policy.logits, states[batch], actions[batch], old_logp[batch],
                advantages[batch], cfg.clip_epsilon, cfg.entropy_coef)
            _, value_grad = value_objective(
                policy.values, states[batch], returns[batch], cfg.value_coef)
            policy.logits += lr * policy_grad
            policy.values -= lr * value_grad
    if not (np.isfinite(policy.logits).all() and np.isfinite(policy.values).all()):
        raise TrainingDiverged(
            "policy update produced non-finite parameters "
            f"(lr={cfg.learning_rate}, clip={cfg.clip_epsilon})"
        )

    # post-update diagnostics over the whole buffer
    obj, _ = policy_objective(policy.logits, states, actions, old_logp,
                              advantages, cfg.clip_epsilon, cfg.entropy_coef)
    loss, _ = value_objective(policy.values, states, returns, cfg.value_coef)
    rows = policy.logits[states]
    shifted = rows - rows.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    new_logp = log_probs[np.arange(T), actions]
    ratio = np.exp(new_logp - old_logp)
    return {
        "policy_objective": obj,
        "value_loss": loss,
        "entropy": float(-(np.exp(log_probs) * log_probs).sum(axis=1).mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_epsilon)),
        "approx_kl": float(np.mean(old_logp - new_logp)),
    }


@dataclass
class TrainResult:
    policy: SoftmaxPolicy
    curve: list[tuple[int, float]]  # (cumulative steps, unscaled episode reward)
    updates: int
    steps: int
    final_stats: dict


def train(env_factory, cfg: PpoConfig, master_seed: int | None = None,
          checkpoint_cb=None) -> TrainResult:
    """Collect/update until ``total_steps`` env steps are consumed.

    ``env_factory(master_seed)`` must build a fresh environment; episodes are
    numbered from zero inside it, so a seeded run is fully reproducible. The
    curve gets one row per completed episode. ``checkpoint_cb(update_index,
    policy)`` fires every ``checkpoint_interval`` updates when given.
    """
    cfg.validate()
    seed = fresh_master_seed() if master_seed is None else int(master_seed)
    env = env_factory(seed)
    sim_cfg: SimConfig = env.cfg
    policy = SoftmaxPolicy.uniform(sim_cfg)
    action_rng = derive_stream(seed, PPO_ACTION_STREAM_ID)
    shuffle_rng = derive_stream(seed, PPO_SHUFFLE_STREAM_ID)
    encode = state_encoder(sim_cfg)
    two_actions = sim_cfg.n_staff == 2

    T = cfg.rollout_length
    states = np.empty(T, dtype=np.int64)
    actions = np.empty(T, dtype=np.int64)
    rewards = np.empty(T)
    dones = np.empty(T, dtype=bool)
    values_buf = np.empty(T)
    logps = np.empty(T)

    logits = policy.logits
    values = policy.values
    curve: list[tuple[int, float]] = []
    episode_reward = 0.0
    steps = 0
    updates = 0
    stats: dict = {}
    # iterate averaging: tabular SGD wanders around its optimum, so the
    # shipped policy is the average of the late-phase iterates rather than
    # whichever endpoint the noise happened to leave us at
    avg_logits = np.zeros_like(logits)
    avg_values = np.zeros_like(values)
    avg_count = 0
    frozen = False

    obs = env.reset()
    idx = encode(obs)
    while steps < cfg.total_steps:
        for t in range(T):
            if two_actions:
                gap = logits[idx, 0] - logits[idx, 1]
                log_p0 = -_softplus(-gap)
                a = 0 if action_rng.uniform() < math.exp(log_p0) else 1
                lp = log_p0 if a == 0 else log_p0 - gap
            else:
                p = policy.probs(idx)
                u = action_rng.uniform()
                a = int(np.searchsorted(np.cumsum(p), u, side="right"))
                a = min(a, len(p) - 1)
                lp = math.log(p[a])
            states[t] = idx
            actions[t] = a
            values_buf[t] = values[idx]
            logps[t] = lp

            result = env.step(a)
            rewards[t] = result.reward * cfg.reward_scale
            dones[t] = result.done
            episode_reward += result.reward
            steps += 1
            if result.done:
                curve.append((steps, episode_reward))
                episode_reward = 0.0
                obs = env.reset()
            else:
                obs = result.obs
            idx = encode(obs)

        bootstrap = 0.0 if dones[T - 1] else values[idx]
        advantages, returns = compute_gae(rewards, values_buf, dones, bootstrap,
                                          cfg.gamma, cfg.gae_lambda)
        advantages = normalize_advantages(advantages)
        update_cfg = cfg
        if cfg.anneal:
            # linear decay hitting zero at 90% of the budget: the final
            # stretch of the curve then samples a frozen, stable policy
            progress = (steps - T) / cfg.total_steps
            remaining = max(0.0, 1.0 - progress / 0.9)
            update_cfg = replace(cfg, learning_rate=cfg.learning_rate * remaining,
                                 entropy_coef=cfg.entropy_coef * remaining)
        if not cfg.anneal or update_cfg.learning_rate > 0.0:
            stats = ppo_update(policy, states, actions, logps, advantages,
                               returns, update_cfg, shuffle_rng)
            if cfg.anneal and steps >= 0.75 * cfg.total_steps:
                avg_logits += logits
                avg_values += values
                avg_count += 1
        elif not frozen:
            if avg_count:
                logits[:] = avg_logits / avg_count
                values[:] = avg_values / avg_count
            frozen = True
        updates += 1
        if (checkpoint_cb is not None and cfg.checkpoint_interval
                and updates % cfg.checkpoint_interval == 0):
            checkpoint_cb(updates, policy)

    return TrainResult(policy=policy, curve=curve, updates=updates, steps=steps,
                       final_stats=stats)


def curve_summary(curve, window_fraction: float = 0.1) -> dict:
    """Trailing-window statistics of a learning curve.

    The window is ``window_fraction`` of the episode count. ``plateau`` is
    true when the trailing window's mean is within 5% (of the best window's
    magnitude) of the best moving average seen, i.e. the curve has stopped
    improving rather than still climbing.
    """
    rewards = np.array([r for _, r in curve], dtype=float)
    n = len(rewards)
    if n == 0:
        raise ValueError("curve is empty")
    window = max(1, int(round(window_fraction * n)))
    moving = np.convolve(rewards, np.full(window, 1.0 / window), mode="valid")
    best = float(moving.max())
    trailing = float(moving[-1])
    return {
        "episodes": n,
        "window": window,
        "trailing_mean": trailing,
        "best_moving": best,
        "plateau": trailing >= best - 0.05 * abs(best),
    }


def _softplus(x: float) -> float:
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


class PpoTrainer(BaseEstimator):
    """Estimator face over :func:`train`: hyperparameters in the constructor,
    ``fit(config)`` runs training, ``predict`` routes greedily with the
    learned logits."""

    def __init__(self, gamma=0.99, gae_lambda=0.95, clip_epsilon=0.2,
                 epochs_per_update=4, minibatch_size=256, rollout_length=4096,
                 learning_rate=0.01, entropy_coef=0.01, value_coef=0.5,
                 reward_scale=0.01, total_steps=4_000_000,
                 checkpoint_interval=100):
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.clip_epsilon = clip_epsilon
        self.epochs_per_update = epochs_per_update
        self.minibatch_size = minibatch_size
        self.rollout_length = rollout_length
        self.learning_rate = learning_rate
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.reward_scale = reward_scale
        self.total_steps = total_steps
        self.checkpoint_interval = checkpoint_interval

    def _config(self) -> PpoConfig:
        return PpoConfig(**{k: getattr(self, k) for k in PpoConfig.__dataclass_fields__})

    def fit(self, config: SimConfig, master_seed: int | None = None):
        config.validate()
        result = train(lambda seed: CallCentreEnv(config, seed),
                       self._config(), master_seed)
        self.result_ = result
        self.policy_ = result.policy
        self.curve_ = result.curve
        return self

    def predict(self, X):
        greedy = self.policy_.greedy()
        if isinstance(X, ObsState):
            return int(greedy.actions[encode_state(X, self.policy_.cfg)])
        if isinstance(X, (int, np.integer)):
            return int(greedy.actions[X])
        indices = [encode_state(x, self.policy_.cfg) if isinstance(x, ObsState) else int(x)
                   for x in X]
        return greedy.actions[np.asarray(indices, dtype=np.int64)]
