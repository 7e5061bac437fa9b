"""Command-line entry points.

Subcommands: verify-monotonicity (exact-solver theorem checks),
train (one or all variants of an experiment config), evaluate (a saved
actor checkpoint), and compare (aggregate finished runs).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import exact, harness
from .ddpg import project_action
from .exact import TabularMdp, check_aoi_monotonicity, check_channel_monotonicity, value_iteration
from .neural import load_checkpoint


def _config_from_args(args) -> harness.ExperimentConfig:
    if getattr(args, "config", None):
        cfg = harness.load_config(args.config)
    else:
        cfg = harness.preset(args.preset)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "episodes", None) is not None:
        cfg.train.episodes = args.episodes
    return cfg


def cmd_verify_monotonicity(args) -> int:
    cfg = _config_from_args(args)
    if args.gamma is not None:
        cfg.system.gamma = args.gamma
        cfg.train.gamma = args.gamma
    env = harness.build_system(cfg)
    mdp = TabularMdp(env.model, env.costs, cfg.system.gamma, cfg.system.tau_max)
    print(
        f"instance: N={mdp.num_devices} M={mdp.num_channels} levels={mdp.levels} "
        f"tau_max={mdp.tau_max} gamma={mdp.gamma} states={mdp.num_states} "
        f"actions={len(mdp.actions)}"
    )
    tables = value_iteration(mdp, tol=args.tol)
    print(f"sweeps: {tables.sweeps}  max Bellman residual: {tables.bellman_residual:.3e}")
    aoi = check_aoi_monotonicity(tables, mdp, eps=args.eps)
    chan = check_channel_monotonicity(tables, mdp, eps=args.eps)
    used = [v for v in chan if v.kind == "q_channel_used"]
    unused = [v for v in chan if v.kind == "q_channel_unused"]
    print(
        f"violations @ eps={args.eps:g}: age={len(aoi)} "
        f"channel-used={len(used)} channel-unused={len(unused)}"
    )
    failed = bool(aoi or chan)
    if args.negative_control:
        inv = harness.ExperimentConfig.from_dict(cfg.to_dict())
        inv.channel.drop_probs = tuple(reversed(tuple(cfg.channel.drop_probs)))
        inv_env = harness.build_system(inv, check_monotone_drop=False)
        inv_mdp = TabularMdp(
            inv_env.model, inv_env.costs, cfg.system.gamma, cfg.system.tau_max
        )
        inv_tables = value_iteration(inv_mdp, tol=args.tol)
        inv_used = [
            v
            for v in check_channel_monotonicity(inv_tables, inv_mdp, eps=args.eps)
            if v.kind == "q_channel_used"
        ]
        print(f"negative control (drops decreasing in level): used-channel violations={len(inv_used)}")
        if not inv_used:
            print("negative control FAILED to produce violations", file=sys.stderr)
            failed = True
    return 1 if failed else 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    variants = list(cfg.variants) if args.variant == "all" else [args.variant]
    summary = harness.run_experiment(
        cfg, args.out, variants=variants, include_baselines=args.include_baselines
    )
    for row in summary:
        nec = row.nec if row.nec is not None else "—"
        print(
            f"{row.variant}: episodes={row.episodes} nec={nec} "
            f"final_train_cost={row.final_train_cost:.4f} "
            f"eval_avg_cost={row.eval_avg_cost:.4f}"
        )
    return 0


def cmd_evaluate(args) -> int:
    config_path = args.config or os.path.join(os.path.dirname(args.checkpoint), "config.yaml")
    cfg = harness.load_config(config_path)
    if args.seed is not None:
        cfg.seed = args.seed
    env = harness.build_system(cfg)
    actor = load_checkpoint(args.checkpoint)
    m = env.num_channels

    def policy(state):
        u, _ = actor.forward(env.encode(state))
        return project_action(m * u, env.num_devices, m)

    rng = np.random.default_rng(cfg.seed)
    episodes = args.episodes or cfg.evaluation.episodes
    horizon = args.horizon or cfg.evaluation.horizon
    if args.dump_trajectories:
        _dump_trajectories(env, policy, rng, episodes, horizon, args.dump_trajectories)
    res = exact.evaluate_policy(
        policy, env, rng, episodes=episodes, horizon=horizon, gamma=cfg.system.gamma
    )
    print(
        f"episodes={episodes} horizon={horizon} "
        f"avg_discounted_return={res.avg_discounted_return:.4f} "
        f"avg_sum_cost={res.avg_sum_cost:.4f}"
    )
    return 0


def _dump_trajectories(env, policy, rng, episodes, horizon, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        taus = [f"tau_{n}" for n in range(env.num_devices)]
        hs = [
            f"h_{n}_{m}"
            for n in range(env.num_devices)
            for m in range(env.num_channels)
        ]
        acts = [f"a_{n}" for n in range(env.num_devices)]
        w.writerow(["episode", "t", *taus, *hs, *acts, "reward"])
        for ep in range(episodes):
            state = env.reset(rng)
            for t in range(horizon):
                a = policy(state)
                out = env.step(state, a, rng)
                w.writerow(
                    [ep, t, *state.tau.tolist(), *state.H.ravel().tolist(),
                     *np.asarray(a).tolist(), repr(out.reward)]
                )
                state = out.next_state


def cmd_compare(args) -> int:
    harness.compare_report(args.runs, stream=sys.stdout)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="aoisched")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-monotonicity", help="solve a small instance exactly and check Q structure")
    p.add_argument("--preset", default="tiny", choices=("tiny", "small", "medium"))
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("--negative-control", action="store_true")
    p.set_defaults(func=cmd_verify_monotonicity)

    p = sub.add_parser("train", help="run training for one variant (or all) and write artifacts")
    p.add_argument("--config")
    p.add_argument("--preset", default="tiny", choices=("tiny", "small", "medium"))
    p.add_argument("--variant", default="all", choices=("all", "baseline", "ma", "mri", "mrii"))
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--include-baselines", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved actor checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dump-trajectories", metavar="CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="aggregate summary tables across finished runs")
    p.add_argument("--runs", nargs="+", required=True)
    p.set_defaults(func=cmd_compare)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
