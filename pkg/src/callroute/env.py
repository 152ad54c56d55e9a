"""Reset/step environment over the simulator, with costs consolidated into
arrival-epoch rewards.

The routing agent only ever acts on arrivals; service completions and
abandonments run in the background. Each ``step`` routes the pending call,
plays the background events forward to the next arrival (or to the drain) and
returns a single consolidated reward:

    reward = - 125 * [routed to a full queue]
             - 125 * (abandonments since the previous reward)
             - staff idle seconds accrued since the previous reward
             - client waiting seconds accrued since the previous reward

Idle seconds are charged inside the working day only; waiting seconds are
charged through the overtime drain. The first step additionally carries the
costs accrued between the episode start and the first arrival, and the last
step carries the drain interval, so episode rewards always telescope to the
full per-episode cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .config import SimConfig
from .domain import EpisodeMetrics, ObsState
from .engine import CallCentreEngine
from .errors import ConfigError, EpisodeFinished, EpisodeNotFinished
from .rng import derive_stream, fresh_master_seed

FULL_QUEUE_PENALTY = 125.0
ABANDONMENT_PENALTY = 125.0


@dataclass
class StepResult:
    obs: ObsState
    reward: float
    done: bool
    info: dict


class CallCentreEnv:
    """Episodic MDP view of the call centre.

    Episode ``k`` draws every event time from the stream derived from
    ``(master_seed, k)``, so any episode replays identically no matter which
    episodes ran before it. Without an explicit master seed one is taken from
    entropy (and exposed as ``master_seed`` for reproduction).
    """

    def __init__(self, cfg: SimConfig, master_seed: int | None = None,
                 collect_trace: bool = False):
        cfg.validate()
        self.cfg = cfg
        if master_seed is None:
            master_seed = cfg.master_seed
        self.master_seed = fresh_master_seed() if master_seed is None else int(master_seed)
        self.collect_trace = collect_trace
        self._engine: CallCentreEngine | None = None
        self._done = True
        self._next_episode = 0
        self._last_tau = 0

    # ------------------------------------------------------------------ API

    def reset(self, episode: int | None = None) -> ObsState:
        """Start episode ``episode`` (auto-incrementing counter by default) and
        return the first decision state: empty queues plus the type of the
        earliest sampled arrival."""
        if episode is None:
            episode = self._next_episode
            self._next_episode = episode + 1
        rng = derive_stream(self.master_seed, episode)
        engine = CallCentreEngine(self.cfg, rng, collect_trace=self.collect_trace)
        engine.start()
        client = engine.advance()
        if client is None:
            raise ConfigError(
                "episode_length: no arrival falls inside the working day under this config"
            )
        self._engine = engine
        self._done = False
        self._last_tau = client.inquiry
        self._idle_mark = 0.0
        self._wait_mark = 0.0
        self._abandon_mark = 0
        self._reward_sum = 0.0
        return self._observe(client.inquiry)

    def step(self, action: int) -> StepResult:
        """Route the pending arrival, run background events to the next
        arrival or to the drain, and return the consolidated reward."""
        if self._done or self._engine is None:
            raise EpisodeFinished("episode is finished (or reset() was never called)")
        engine = self._engine
        rejected = engine.handle_arrival(action)
        nxt = engine.advance()
        now = engine.queue.now

        idle = engine.charged_idle(now)
        wait = engine.charged_wait(now)
        abandoned = engine.abandoned
        d_idle = idle - self._idle_mark
        d_wait = wait - self._wait_mark
        d_abandon = abandoned - self._abandon_mark
        self._idle_mark = idle
        self._wait_mark = wait
        self._abandon_mark = abandoned

        reward = -(FULL_QUEUE_PENALTY * rejected
                   + ABANDONMENT_PENALTY * d_abandon
                   + d_idle + d_wait)
        self._reward_sum += reward

        if nxt is None:
            self._done = True
            obs = self._observe(self._last_tau)
        else:
            self._last_tau = nxt.inquiry
            obs = self._observe(nxt.inquiry)
        info = {
            "time": now,
            "rejected": rejected,
            "abandoned": d_abandon,
            "idle_seconds": d_idle,
            "wait_seconds": d_wait,
        }
        return StepResult(obs, reward, self._done, info)

    @property
    def done(self) -> bool:
        return self._done

    def metrics(self) -> EpisodeMetrics:
        """Per-episode counters; only available after the episode drained."""
        engine = self._engine
        if engine is None or not self._done:
            raise EpisodeNotFinished("episode metrics requested before the drain")
        return EpisodeMetrics(
            total_reward=self._reward_sum,
            arrivals=engine.arrivals,
            served=engine.served,
            abandoned=engine.abandoned,
            rejected=engine.rejected,
            wait_sum=engine.wait_sum,
            wait_count=engine.wait_count,
            idle_seconds=tuple(staff.idle_accum for staff in engine.staff),
            abandoned_wait_sum=engine.abandoned_wait_sum,
        )

    @property
    def trace(self) -> Optional[list[tuple]]:
        return None if self._engine is None else self._engine.trace

    @property
    def engine(self) -> Optional[CallCentreEngine]:
        return self._engine

    def _observe(self, tau: int) -> ObsState:
        return ObsState(self._engine.queue_lengths(), tau)
