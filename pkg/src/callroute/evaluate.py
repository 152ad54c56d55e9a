"""Multi-episode policy evaluation with seed-matched episode streams.

Evaluating two policies under the same master seed replays the same episode
streams (common random numbers), which sharpens side-by-side comparisons.
Episodes are embarrassingly parallel: results land in per-episode slots keyed
by episode index, so the report is identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import EpisodeMetrics
from .errors import InvalidActionError
from .policies import Policy
from .rng import POLICY_EVAL_STREAM_OFFSET, derive_stream, fresh_master_seed

# per-episode report columns, named after the headline evaluation metrics
BASE_COLUMNS = ("total_reward", "client_served", "client_abandonment",
                "client_rejected", "client_waiting_time")

Z_95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    ci95: float  # half-width of the normal-approximation 95% interval

    @classmethod
    def of(cls, samples: np.ndarray) -> "MetricSummary":
        n = len(samples)
        std = float(samples.std(ddof=1)) if n > 1 else 0.0
        return cls(float(samples.mean()), std, Z_95 * std / math.sqrt(n))


@dataclass
class AggregateReport:
    """Per-episode metric columns plus their aggregate summaries."""

    policy_name: str
    episodes: int
    master_seed: int
    columns: dict[str, np.ndarray] = field(repr=False)

    def metric_names(self) -> tuple[str, ...]:
        return tuple(self.columns)

    def summary(self, metric: str) -> MetricSummary:
        return MetricSummary.of(self.columns[metric])

    def summaries(self) -> dict[str, MetricSummary]:
        return {name: self.summary(name) for name in self.columns}

    def to_dict(self) -> dict:
        return {
            "policy": self.policy_name,
            "episodes": self.episodes,
            "master_seed": self.master_seed,
            "metrics": {
                name: {"mean": s.mean, "std": s.std, "ci95": s.ci95}
                for name, s in self.summaries().items()
            },
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fp:
            json.dump(self.to_dict(), fp, indent=2, sort_keys=True)
            fp.write("\n")

    def write_episodes_csv(self, path) -> None:
        names = list(self.columns)
        with open(path, "w", encoding="utf-8", newline="") as fp:
            writer = csv.writer(fp)
            writer.writerow(["episode", *names])
            for k in range(self.episodes):
                writer.writerow([k, *(repr(float(self.columns[n][k])) for n in names)])


def metrics_to_row(metrics: EpisodeMetrics) -> dict[str, float]:
    row = {
        "total_reward": metrics.total_reward,
        "client_served": float(metrics.served),
        "client_abandonment": float(metrics.abandoned),
        "client_rejected": float(metrics.rejected),
        "client_waiting_time": metrics.mean_wait,
    }
    for s, idle in enumerate(metrics.idle_seconds):
        row[f"staff_{s}_idle_time"] = idle
    return row


def _run_episodes(env_factory, policy: Policy, master_seed: int,
                  start: int, stop: int) -> list[dict[str, float]]:
    env = env_factory(master_seed)
    rows = []
    for episode in range(start, stop):
        obs = env.reset(episode=episode)
        action_rng = derive_stream(master_seed, POLICY_EVAL_STREAM_OFFSET + episode)
        done = False
        while not done:
            action = policy.act(obs, action_rng)
            try:
                result = env.step(action)
            except InvalidActionError as exc:
                raise InvalidActionError(f"{exc}; offending state: {obs}") from None
            obs = result.obs
            done = result.done
        rows.append(metrics_to_row(env.metrics()))
    return rows


def evaluate(env_factory, policy: Policy, n_episodes: int,
             master_seed: int | None = None, n_jobs: int = 1,
             policy_name: str = "policy") -> AggregateReport:
    """Run ``n_episodes`` with episode-indexed streams and aggregate.

    ``env_factory(master_seed)`` builds the environment (must be picklable
    for ``n_jobs > 1``). Identical inputs give an identical report; a None
    master seed takes one from entropy and records it in the report.
    """
    if n_episodes < 1:
        raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
    seed = fresh_master_seed() if master_seed is None else int(master_seed)

    if n_jobs <= 1 or n_episodes == 1:
        rows = _run_episodes(env_factory, policy, seed, 0, n_episodes)
    else:
        n_jobs = min(n_jobs, n_episodes)
        bounds = np.linspace(0, n_episodes, n_jobs + 1, dtype=int)
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_run_episodes, env_factory, policy, seed,
                                   int(a), int(b))
                       for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            rows = [row for future in futures for row in future.result()]

    columns = {name: np.array([row[name] for row in rows]) for name in rows[0]}
    return AggregateReport(policy_name=policy_name, episodes=n_episodes,
                           master_seed=seed, columns=columns)


# metric direction for ordering verdicts: True when larger means better
HIGHER_IS_BETTER = {
    "total_reward": True,
    "client_served": True,
    "client_abandonment": False,
    "client_rejected": False,
    "client_waiting_time": False,
}


@dataclass
class Comparison:
    reports: list[AggregateReport]

    def paired_gap(self, metric: str, a: str, b: str) -> tuple[float, float]:
        """Mean per-episode difference (a minus b) and its 95% half-width.
        Valid because matched seeds pair the episodes."""
        ra, rb = self._by_name(a), self._by_name(b)
        diff = ra.columns[metric] - rb.columns[metric]
        return float(diff.mean()), MetricSummary.of(diff).ci95

    def ordering(self, metric: str) -> list[str]:
        """Policy names best-first under the metric's preferred direction."""
        better_high = HIGHER_IS_BETTER.get(metric, metric == "total_reward")
        ranked = sorted(self.reports, key=lambda r: r.summary(metric).mean,
                        reverse=better_high)
        return [r.policy_name for r in ranked]

    def render(self) -> str:
        """Aligned text table: one metric per row, one policy per column,
        followed by per-metric ordering verdicts."""
        metrics = self.reports[0].metric_names()
        names = [r.policy_name for r in self.reports]
        width = max(12, *(len(n) + 2 for n in names))
        lines = ["".ljust(24) + "".join(n.rjust(width) for n in names)]
        for metric in metrics:
            cells = [f"{r.summary(metric).mean:,.1f}".rjust(width) for r in self.reports]
            lines.append(metric.ljust(24) + "".join(cells))
        lines.append("")
        for metric in metrics:
            direction = HIGHER_IS_BETTER.get(metric, True)
            arrow = "higher is better" if direction else "lower is better"
            lines.append(f"{metric}: {' > '.join(self.ordering(metric))} ({arrow})")
        return "\n".join(lines)

    def _by_name(self, name: str) -> AggregateReport:
        for report in self.reports:
            if report.policy_name == name:
                return report
        raise KeyError(f"no report named {name!r}")


def compare(reports: list[AggregateReport]) -> Comparison:
    """Side-by-side comparison; requires matched episode counts and seeds so
    per-episode differences are paired."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    first = reports[0]
    for report in reports[1:]:
        if report.episodes != first.episodes:
            raise ValueError(
                f"incomparable reports: {report.policy_name} has {report.episodes} "
                f"episodes, {first.policy_name} has {first.episodes}"
            )
        if report.master_seed != first.master_seed:
            raise ValueError(
                "incomparable reports: master seeds differ, episodes are not paired"
            )
    return Comparison(list(reports))
