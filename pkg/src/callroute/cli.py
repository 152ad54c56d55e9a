"""Command-line front end: solve, train, eval, simulate.

Every subcommand is deterministic under a fixed (config, seed) pair, writes
machine-readable artifacts only under --out, and reports timing to stdout
(never into output files, which stay byte-reproducible). Exit codes: 0 on
success, 1 for usage/config problems, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import sys
import time
from pathlib import Path

from .config import SimConfig, load_config
from .env import CallCentreEnv
from .errors import CallRouteError, ConfigError, PolicyFileError
from .evaluate import evaluate
from .policies import (
    Policy,
    RandomPolicy,
    SoftmaxPolicy,
    load_policy,
    save_policy,
)
from .ppo import PpoConfig, train
from .rng import POLICY_EVAL_STREAM_OFFSET, derive_stream, fresh_master_seed
from .solvers import ValueIterationSolver

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; keep 2 for runtime failures instead
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="callroute",
                     description="Call centre routing: simulate, plan, train, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config file (defaults to the stock configuration)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides the config; default: entropy)")

    p = sub.add_parser("solve", help="plan a routing policy by value iteration")
    common(p)
    p.add_argument("--transition-model", choices=("embedded", "literal"), default=None)

    p = sub.add_parser("train", help="learn a routing policy with clipped policy gradients")
    common(p)
    p.add_argument("--total-steps", type=int, default=None)

    p = sub.add_parser("eval", help="evaluate a policy over many episodes")
    p.add_argument("policy", help="'random' or a policy file path")
    common(p)
    p.add_argument("--episodes", "-n", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("simulate", help="run one seeded episode and dump its event trace")
    p.add_argument("policy", help="'random' or a policy file path")
    common(p)
    return parser


def _resolve_config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config is not None else SimConfig().validate()
    if args.seed is not None:
        cfg = cfg.with_overrides(master_seed=int(args.seed))
    return cfg


def _resolve_seed(cfg: SimConfig) -> int:
    if cfg.master_seed is not None:
        return int(cfg.master_seed)
    seed = fresh_master_seed()
    print(f"no seed given; using entropy seed {seed}")
    return seed


def _resolve_policy(spec: str, cfg: SimConfig) -> Policy:
    if spec == "random":
        return RandomPolicy(cfg.n_staff)
    return load_policy(spec, cfg)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)
        fp.write("\n")


def run_solve(args) -> int:
    cfg = _resolve_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    solver = ValueIterationSolver(transition_model=args.transition_model)
    solver.fit(cfg)
    save_policy(solver.policy_, out / "policy.json")
    _write_json(out / "solve_summary.json", {
        "iterations": solver.n_iter_,
        "residual": solver.residual_,
        "gamma": solver.gamma_,
        "tol": cfg.vi_tolerance if solver.tol is None else solver.tol,
        "transition_model": solver.model_.mode,
        "states": solver.model_.n_states,
        "decision_states": int(len(solver.policy_.actions)),
    })
    print(f"solved in {solver.n_iter_} sweeps, residual {solver.residual_:.3e}, "
          f"wall time {solver.elapsed_:.3f}s")
    print(f"policy written to {out / 'policy.json'}")
    return 0


def run_train(args) -> int:
    cfg = _resolve_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(cfg)
    ppo_cfg = PpoConfig()
    if args.total_steps is not None:
        ppo_cfg = ppo_cfg.with_overrides(total_steps=int(args.total_steps))

    def checkpoint(update_index: int, policy: SoftmaxPolicy) -> None:
        save_policy(policy, out / f"checkpoint_{update_index:06d}.json")

    start = time.perf_counter()
    result = train(functools.partial(CallCentreEnv, cfg), ppo_cfg, seed,
                   checkpoint_cb=checkpoint)
    elapsed = time.perf_counter() - start

    save_policy(result.policy, out / "policy.json")
    with open(out / "curve.csv", "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["steps", "episode_reward"])
        for steps, reward in result.curve:
            writer.writerow([steps, repr(reward)])
    _write_json(out / "train_summary.json", {
        "total_steps": result.steps,
        "updates": result.updates,
        "episodes": len(result.curve),
        "master_seed": seed,
        "final_stats": result.final_stats,
    })
    print(f"trained {result.steps} steps over {len(result.curve)} episodes "
          f"in {elapsed:.1f}s")
    print(f"policy written to {out / 'policy.json'}")
    return 0


def run_eval(args) -> int:
    cfg = _resolve_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    policy = _resolve_policy(args.policy, cfg)
    seed = _resolve_seed(cfg)
    name = "random" if args.policy == "random" else Path(args.policy).stem
    start = time.perf_counter()
    report = evaluate(functools.partial(CallCentreEnv, cfg), policy,
                      args.episodes, seed, n_jobs=args.jobs, policy_name=name)
    elapsed = time.perf_counter() - start
    report.write_json(out / "report.json")
    report.write_episodes_csv(out / "episodes.csv")
    print(f"evaluated {name} over {args.episodes} episodes in {elapsed:.1f}s")
    for metric, summary in report.summaries().items():
        print(f"  {metric:<24} {summary.mean:12,.2f}  (std {summary.std:,.2f})")
    return 0


def run_simulate(args) -> int:
    cfg = _resolve_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    policy = _resolve_policy(args.policy, cfg)
    seed = _resolve_seed(cfg)
    env = CallCentreEnv(cfg, seed, collect_trace=True)
    obs = env.reset(episode=0)
    action_rng = derive_stream(seed, POLICY_EVAL_STREAM_OFFSET)
    done = False
    while not done:
        result = env.step(policy.act(obs, action_rng))
        obs, done = result.obs, result.done
    with open(out / "trace.csv", "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["time", "seq", "kind", "client_id", "staff",
                         *(f"q{s}" for s in range(cfg.n_staff))])
        for row in env.trace:
            writer.writerow([repr(row[0]), *row[1:]])
    metrics = env.metrics()
    _write_json(out / "metrics.json", {
        "total_reward": metrics.total_reward,
        "arrivals": metrics.arrivals,
        "served": metrics.served,
        "abandoned": metrics.abandoned,
        "rejected": metrics.rejected,
        "mean_wait": metrics.mean_wait,
        "idle_seconds": list(metrics.idle_seconds),
        "master_seed": seed,
    })
    print(f"trace with {len(env.trace)} events written to {out / 'trace.csv'}")
    return 0


_RUNNERS = {"solve": run_solve, "train": run_train, "eval": run_eval,
            "simulate": run_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        return _RUNNERS[args.command](args)
    except (ConfigError, PolicyFileError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except CallRouteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
