"""Experiment configuration, seeded end-to-end runs, and CSV reporting.

A single YAML config plus a master seed pins everything: the random device
dynamics, channel tables, network initialization, exploration, replay
sampling, and therefore every emitted CSV byte.  The master seed fans out
through numpy SeedSequence children in a fixed order (system, evaluation,
then one slot per variant in canonical order), so a single-variant run
reproduces exactly the same numbers as the same variant inside a full run.

Outputs per run directory: the resolved config snapshot (including the
generated process matrices and channel tensors), per-episode metrics CSVs
(deterministic columns), per-episode wall-clock timing CSVs (kept separate
so metrics stay byte-reproducible), actor/critic checkpoints, and a summary
CSV with the convergence-episode and final-cost figures used for
comparisons.
"""

from __future__ import annotations

import csv
import os
import sys
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from .channel import DEFAULT_DROP_PROBS, ChannelModel
from .ddpg import (
    VARIANTS,
    Agent,
    TrainConfig,
    TrainStreams,
    train,
)
from .env import SchedulingEnv, SystemState
from .estimation import CostModel, LtiProcess, sample_process
from .exact import enumerate_actions, evaluate_policy
from .neural import save_checkpoint


class ConfigError(ValueError):
    pass


class ComparabilityError(ValueError):
    pass


BASELINE_KINDS = ("random_feasible", "greedy_aoi")
# canonical seed-slot order: system gen, evaluation, then one per variant
_SEED_SLOTS = ("system", "eval", *VARIANTS)


def _plain(obj):
    """YAML-native copy: tuples become lists, recursively."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass
class SystemSpec:
    num_devices: int = 2
    num_channels: int = 1
    state_dim: int = 2
    meas_dim: int = 1
    spectral_radius_range: tuple = (1.0, 1.3)
    tau_max: int = 6
    gamma: float = 0.95
    processes: list | None = None  # resolved snapshot: nested matrices

    def validate(self):
        if self.num_channels >= self.num_devices:
            raise ConfigError("system.num_channels must be < system.num_devices")
        if self.tau_max < 1:
            raise ConfigError("system.tau_max must be >= 1")
        if not 0 < self.gamma < 1:
            raise ConfigError("system.gamma must lie in (0, 1)")


@dataclass
class ChannelSpec:
    levels: int = 5
    drop_probs: tuple = DEFAULT_DROP_PROBS
    quantization: str = "equal_quantile"
    rayleigh_scale_range: tuple = (0.5, 2.0)
    thresholds: tuple | None = None
    level_probs: list | None = None  # resolved snapshot: explicit q tensor

    def validate(self):
        if self.levels < 2:
            raise ConfigError("channel.levels must be >= 2")
        if len(self.drop_probs) != self.levels:
            raise ConfigError("channel.drop_probs must list one value per level")
        if self.quantization not in ("equal_quantile", "fixed_thresholds"):
            raise ConfigError(f"unknown channel.quantization {self.quantization!r}")
        if self.quantization == "fixed_thresholds" and self.thresholds is None:
            raise ConfigError("channel.thresholds required for fixed_thresholds mode")


@dataclass
class EvalSpec:
    episodes: int = 100
    horizon: int = 500

    def validate(self):
        if self.episodes < 1 or self.horizon < 1:
            raise ConfigError("evaluation.episodes and .horizon must be >= 1")


@dataclass
class ExperimentConfig:
    name: str = "custom"
    seed: int = 0
    system: SystemSpec = field(default_factory=SystemSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    variants: tuple = VARIANTS
    evaluation: EvalSpec = field(default_factory=EvalSpec)

    def validate(self):
        self.system.validate()
        self.channel.validate()
        self.evaluation.validate()
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"variants: unknown variant {v!r}")
        if self.train.gamma != self.system.gamma:
            raise ConfigError("train.gamma must equal system.gamma")

    def to_dict(self) -> dict:
        d = _plain(asdict(self))
        d["train"].pop("variant")  # variant is a run parameter, not config
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            system = SystemSpec(**d.pop("system", {}))
            chan = d.pop("channel", {})
            chan = ChannelSpec(**chan)
            train_d = dict(d.pop("train", {}))
            for key in ("actor_hidden", "critic_hidden"):
                if key in train_d and train_d[key] is not None:
                    train_d[key] = tuple(train_d[key])
            train_cfg = TrainConfig(**train_d)
            evaluation = EvalSpec(**d.pop("evaluation", {}))
            cfg = cls(
                system=system,
                channel=chan,
                train=train_cfg,
                evaluation=evaluation,
                variants=tuple(d.pop("variants", VARIANTS)),
                **d,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg


def save_config(config: ExperimentConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(yaml.safe_load(fh))


def preset(name: str) -> ExperimentConfig:
    """Desk-scale experiment families.

    tiny   — oracle scale, exact-max TD targets, checked against value
             iteration;
    small  — shallow single-hidden-layer critic at (6, 3);
    medium — deep three-hidden-layer critic at (14, 7).
    """
    if name == "tiny":
        return ExperimentConfig(
            name="tiny",
            system=SystemSpec(num_devices=2, num_channels=1, tau_max=6, gamma=0.95),
            channel=ChannelSpec(levels=2, drop_probs=(0.05, 0.2)),
            train=TrainConfig(
                gamma=0.95,
                episodes=300,
                horizon=500,
                td_target_mode="exact_max",
                actor_hidden=(64, 64, 64),
                critic_hidden=(64,),
                monotone_hidden=64,
                action_hidden=64,
            ),
            evaluation=EvalSpec(episodes=200, horizon=400),
        )
    if name == "small":
        return ExperimentConfig(
            name="small",
            system=SystemSpec(num_devices=6, num_channels=3, tau_max=30, gamma=0.95),
            channel=ChannelSpec(levels=5),
            train=TrainConfig(
                gamma=0.95,
                episodes=120,
                horizon=500,
                actor_hidden=(64, 64, 64),
                critic_hidden=(64,),
                monotone_hidden=64,
                action_hidden=64,
            ),
            evaluation=EvalSpec(episodes=40, horizon=500),
        )
    if name == "medium":
        return ExperimentConfig(
            name="medium",
            system=SystemSpec(num_devices=14, num_channels=7, tau_max=30, gamma=0.95),
            channel=ChannelSpec(levels=5),
            train=TrainConfig(
                gamma=0.95,
                episodes=150,
                horizon=500,
                actor_hidden=(96, 96, 96),
                critic_hidden=(96, 96, 96),
                monotone_hidden=96,
                action_hidden=96,
            ),
            evaluation=EvalSpec(episodes=40, horizon=500),
        )
    raise ConfigError(f"unknown preset {name!r}")


def seed_children(config: ExperimentConfig) -> dict:
    children = np.random.SeedSequence(config.seed).spawn(len(_SEED_SLOTS))
    return dict(zip(_SEED_SLOTS, children))


def build_system(
    config: ExperimentConfig, check_monotone_drop: bool = True
) -> SchedulingEnv:
    """Materialize processes and channel tables (from the snapshot when the
    config carries them, otherwise sampled from the system seed slot).
    check_monotone_drop=False admits inverted drop tables for negative
    controls."""
    sys_rng = np.random.default_rng(seed_children(config)["system"])
    spec = config.system
    if spec.processes is not None:
        procs = [LtiProcess.from_dict(d) for d in spec.processes]
    else:
        procs = [
            sample_process(
                sys_rng,
                state_dim=spec.state_dim,
                meas_dim=spec.meas_dim,
                spectral_range=tuple(spec.spectral_radius_range),
            )
            for _ in range(spec.num_devices)
        ]
    costs = [CostModel.from_process(p, spec.tau_max) for p in procs]
    chan = config.channel
    model = ChannelModel.build(
        spec.num_devices,
        spec.num_channels,
        chan.levels,
        drop_probs=list(chan.drop_probs),
        rng=sys_rng,
        scale_range=tuple(chan.rayleigh_scale_range),
        thresholds=chan.thresholds,
        level_probs=(
            np.array(chan.level_probs, dtype=float)
            if chan.level_probs is not None
            else None
        ),
        check_monotone_drop=check_monotone_drop,
    )
    env = SchedulingEnv(model, costs, spec.tau_max)
    env.processes = procs
    return env


def resolved_config(config: ExperimentConfig, env: SchedulingEnv) -> ExperimentConfig:
    """Snapshot with the concrete matrices, reproducible without re-sampling."""
    system = replace(config.system, processes=[p.to_dict() for p in env.processes])
    chan = replace(config.channel, level_probs=env.model.level_probs.tolist())
    return replace(config, system=system, channel=chan)


@dataclass
class MetricsRow:
    run_id: str
    variant: str
    episode: int
    avg_sum_cost: float
    critic_loss: float
    actor_loss: float
    penalty: float
    wall_seconds: float


METRICS_COLUMNS = ("episode", "avg_sum_cost", "critic_loss", "actor_loss", "penalty")


def write_metrics_csv(path, rows: list[MetricsRow]):
    """Deterministic columns only; wall time goes to the timing CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for r in rows:
            w.writerow(
                [r.episode, repr(r.avg_sum_cost), repr(r.critic_loss),
                 repr(r.actor_loss), repr(r.penalty)]
            )


def write_timing_csv(path, rows: list[MetricsRow]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("episode", "wall_seconds"))
        for r in rows:
            w.writerow([r.episode, repr(r.wall_seconds)])


def episodes_to_convergence(
    costs, window: int = 10, final_window: int = 50, rel_tol: float = 0.05
):
    """First episode whose trailing `window`-episode average is within
    rel_tol of the final `final_window`-episode average; None if never."""
    costs = np.asarray(costs, dtype=float)
    if costs.size < window:
        return None
    final = costs[-min(final_window, costs.size):].mean()
    kernel = np.ones(window) / window
    ma = np.convolve(costs, kernel, mode="valid")  # ma[i] ends at episode i+window-1
    hits = np.flatnonzero(np.abs(ma - final) <= rel_tol * abs(final))
    if hits.size == 0:
        return None
    return int(hits[0] + window - 1)


def make_baseline_policy(kind: str, env: SchedulingEnv, rng: np.random.Generator):
    """Comparison policies: uniform feasible draw, or cost-greedy matching."""
    if kind == "random_feasible":
        actions = enumerate_actions(env.num_devices, env.num_channels)

        def random_policy(state: SystemState):
            return actions[rng.integers(len(actions))]

        return random_policy
    if kind == "greedy_aoi":

        def greedy_policy(state: SystemState):
            costs_now = np.array(
                [c.table[min(t, env.tau_max) - 1] for c, t in zip(env.costs, state.tau)]
            )
            order = np.lexsort((np.arange(env.num_devices), -costs_now))
            a = np.zeros(env.num_devices, dtype=np.int64)
            taken = np.zeros(env.num_channels, dtype=bool)
            for dev in order[: env.num_channels]:
                drops = np.array(
                    [
                        env.model.drop_probs[dev, m, state.H[dev, m] - 1]
                        for m in range(env.num_channels)
                    ]
                )
                drops[taken] = np.inf
                best = int(np.argmin(drops))
                a[dev] = best + 1
                taken[best] = True
            return a

        return greedy_policy
    raise ConfigError(f"unknown baseline kind {kind!r}")


@dataclass
class SummaryRow:
    variant: str
    episodes: int
    nec: int | None
    final_train_cost: float
    eval_avg_cost: float
    eval_discounted_return: float
    train_seconds_per_episode: float


SUMMARY_COLUMNS = (
    "variant",
    "episodes",
    "nec",
    "final_train_cost",
    "eval_avg_cost",
    "eval_discounted_return",
    "train_seconds_per_episode",
)


def write_summary_csv(path, rows: list[SummaryRow]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow(
                [
                    r.variant,
                    r.episodes,
                    "" if r.nec is None else r.nec,
                    repr(r.final_train_cost),
                    repr(r.eval_avg_cost),
                    repr(r.eval_discounted_return),
                    repr(r.train_seconds_per_episode),
                ]
            )


def read_summary_csv(path) -> list[SummaryRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                SummaryRow(
                    variant=rec["variant"],
                    episodes=int(rec["episodes"]),
                    nec=int(rec["nec"]) if rec["nec"] else None,
                    final_train_cost=float(rec["final_train_cost"]),
                    eval_avg_cost=float(rec["eval_avg_cost"]),
                    eval_discounted_return=float(rec["eval_discounted_return"]),
                    train_seconds_per_episode=float(rec["train_seconds_per_episode"]),
                )
            )
    return rows


def final_train_cost(costs, window: int = 50) -> float:
    costs = np.asarray(costs, dtype=float)
    return float(costs[-min(window, costs.size):].mean())


def train_variant(
    config: ExperimentConfig,
    env: SchedulingEnv,
    variant: str,
    out_dir,
) -> tuple[Agent, list[MetricsRow]]:
    """Train one variant with its canonical seed slot; writes metrics,
    timing, and checkpoints into out_dir."""
    children = seed_children(config)
    agent_ss, train_ss = children[variant].spawn(2)
    cfg = replace(config.train, variant=variant)
    agent = Agent(
        env.state_dim,
        env.num_devices,
        env.num_channels,
        cfg,
        np.random.default_rng(agent_ss),
    )
    rows: list[MetricsRow] = []
    run_id = f"{config.name}-seed{config.seed}"

    def sink(m):
        rows.append(
            MetricsRow(
                run_id=run_id,
                variant=variant,
                episode=m.episode,
                avg_sum_cost=m.avg_sum_cost,
                critic_loss=m.critic_loss,
                actor_loss=m.actor_loss,
                penalty=m.penalty,
                wall_seconds=m.wall_seconds,
            )
        )

    train(
        agent,
        env,
        cfg,
        metrics_sink=sink,
        streams=TrainStreams.from_seed_seq(train_ss),
    )
    write_metrics_csv(os.path.join(out_dir, f"metrics_{variant}.csv"), rows)
    write_timing_csv(os.path.join(out_dir, f"timing_{variant}.csv"), rows)
    save_checkpoint(os.path.join(out_dir, f"actor_{variant}.json"), agent.actor)
    save_checkpoint(os.path.join(out_dir, f"critic_{variant}.json"), agent.critic)
    return agent, rows


def _eval_rng(config: ExperimentConfig, slot: str) -> np.random.Generator:
    # one eval child per variant/baseline slot, canonical order
    slots = (*VARIANTS, *BASELINE_KINDS)
    children = seed_children(config)["eval"].spawn(len(slots))
    return np.random.default_rng(children[slots.index(slot)])


def run_experiment(
    config: ExperimentConfig,
    out_dir,
    variants=None,
    include_baselines: bool = False,
) -> list[SummaryRow]:
    """Full pipeline: generate system, train each variant, evaluate greedy
    policies without exploration noise, and write all artifacts."""
    config.validate()
    os.makedirs(out_dir, exist_ok=True)
    env = build_system(config)
    save_config(resolved_config(config, env), os.path.join(out_dir, "config.yaml"))
    summary: list[SummaryRow] = []
    for variant in variants or config.variants:
        agent, rows = train_variant(config, env, variant, out_dir)
        costs = [r.avg_sum_cost for r in rows]
        res = evaluate_policy(
            lambda s: agent.greedy_schedule(env.encode(s)),
            env,
            _eval_rng(config, variant),
            episodes=config.evaluation.episodes,
            horizon=config.evaluation.horizon,
            gamma=config.system.gamma,
        )
        summary.append(
            SummaryRow(
                variant=variant,
                episodes=len(rows),
                nec=episodes_to_convergence(costs),
                final_train_cost=final_train_cost(costs),
                eval_avg_cost=res.avg_sum_cost,
                eval_discounted_return=res.avg_discounted_return,
                train_seconds_per_episode=float(
                    np.mean([r.wall_seconds for r in rows]) if rows else 0.0
                ),
            )
        )
    if include_baselines:
        for kind in BASELINE_KINDS:
            rng = _eval_rng(config, kind)
            res = evaluate_policy(
                make_baseline_policy(kind, env, rng),
                env,
                rng,
                episodes=config.evaluation.episodes,
                horizon=config.evaluation.horizon,
                gamma=config.system.gamma,
            )
            summary.append(
                SummaryRow(
                    variant=kind,
                    episodes=0,
                    nec=None,
                    final_train_cost=float("nan"),
                    eval_avg_cost=res.avg_sum_cost,
                    eval_discounted_return=res.avg_discounted_return,
                    train_seconds_per_episode=0.0,
                )
            )
    write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
    return summary


def _comparable_dict(config: ExperimentConfig) -> dict:
    d = config.to_dict()
    d.pop("seed")
    d["system"].pop("processes")
    d["channel"].pop("level_probs")
    return d


def compare_report(run_dirs: list, stream=None) -> list[dict]:
    """Aggregate summary rows across runs of the same config family
    (seed may differ); prints a mean +/- std table per variant."""
    if len(run_dirs) < 1:
        raise ComparabilityError("need at least one completed run")
    reference = None
    rows_by_variant: dict[str, list[SummaryRow]] = {}
    for d in run_dirs:
        cfg = load_config(os.path.join(d, "config.yaml"))
        key = _comparable_dict(cfg)
        if reference is None:
            reference = key
        elif key != reference:
            raise ComparabilityError(f"run {d} was produced by a different config")
        for row in read_summary_csv(os.path.join(d, "summary.csv")):
            rows_by_variant.setdefault(row.variant, []).append(row)

    def agg(values):
        values = [v for v in values if v is not None and not np.isnan(v)]
        if not values:
            return (float("nan"), float("nan"))
        arr = np.asarray(values, dtype=float)
        return float(arr.mean()), float(arr.std(ddof=0))

    out = []
    order = [v for v in (*VARIANTS, *BASELINE_KINDS) if v in rows_by_variant]
    for variant in order:
        rows = rows_by_variant[variant]
        nec_m, nec_s = agg([r.nec for r in rows])
        cost_m, cost_s = agg([r.eval_avg_cost for r in rows])
        ftc_m, ftc_s = agg([r.final_train_cost for r in rows])
        sec_m, sec_s = agg([r.train_seconds_per_episode for r in rows])
        out.append(
            {
                "variant": variant,
                "runs": len(rows),
                "nec_converged": sum(r.nec is not None for r in rows),
                "nec_mean": nec_m,
                "nec_std": nec_s,
                "final_train_cost_mean": ftc_m,
                "final_train_cost_std": ftc_s,
                "eval_avg_cost_mean": cost_m,
                "eval_avg_cost_std": cost_s,
                "seconds_per_episode_mean": sec_m,
                "seconds_per_episode_std": sec_s,
            }
        )
    if stream is None:
        stream = sys.stdout
    header = (
        f"{'variant':<16} {'runs':>4} {'NEC':>14} {'final cost':>20} "
        f"{'eval cost':>20} {'sec/episode':>16}"
    )
    print(header, file=stream)
    print("-" * len(header), file=stream)
    for r in out:
        nec = (
            f"{r['nec_mean']:6.1f} ± {r['nec_std']:5.1f}"
            if not np.isnan(r["nec_mean"])
            else "     —"
        )
        print(
            f"{r['variant']:<16} {r['runs']:>4} {nec:>14} "
            f"{r['final_train_cost_mean']:9.3f} ± {r['final_train_cost_std']:7.3f} "
            f"{r['eval_avg_cost_mean']:9.3f} ± {r['eval_avg_cost_std']:7.3f} "
            f"{r['seconds_per_episode_mean']:9.3f} ± {r['seconds_per_episode_std']:5.3f}",
            file=stream,
        )
    return out
