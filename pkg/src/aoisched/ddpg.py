"""Actor-critic training for the scheduling MDP.

Four critic-training variants share one loop:

* baseline — plain TD(0) critic regression;
* ma — the sign-constrained two-path critic, re-projected after every step;
* mri — TD loss plus the positive-derivative penalty max(0, dQ/ds_j) summed
  over a sampled subset of the effective coordinates (needs second-order
  parameter gradients, see neural.mixed_backward);
* mrii — TD loss plus the positive-increment penalty
  max(0, Q(s + e_j) - Q(s)) over the same kind of subset, forward-only.

The effective coordinate set of a transition is every age entry plus only
the channel entries the executed action actually used; unused channels
cannot change Q, so penalizing them would be noise.

Actor updates are standard deterministic policy gradient: the critic's
action-input gradient is chained through the actor.  The actor emits a raw
vector in [0, M]^N; a deterministic repair maps it to a feasible schedule
when acting, while gradients flow through the raw output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .env import SchedulingEnv, SystemState, validate_action
from .exact import enumerate_actions
from .neural import (
    AdamState,
    MlpCritic,
    MonotoneCritic,
    Mlp,
    adam_step,
    all_finite,
    flatten_grads,
    soft_update,
)

VARIANTS = ("baseline", "ma", "mri", "mrii")


class TrainingDivergedError(RuntimeError):
    def __init__(self, episode: int, message: str):
        super().__init__(message)
        self.episode = episode


@dataclass
class TrainConfig:
    variant: str = "baseline"
    gamma: float = 0.95
    episodes: int = 300
    horizon: int = 500
    batch_size: int = 128
    replay_capacity: int = 20_000
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    lr_decay: float = 0.001
    delta: float = 0.005
    penalty_samples: int = 2
    penalty_weight: float = 1.0
    td_target_mode: str = "target_actor"
    exact_max_action_limit: int = 1000
    warmup_batches: int = 10
    noise_start_frac: float = 0.5
    noise_end_frac: float = 0.05
    actor_hidden: tuple = (64, 64, 64)
    critic_hidden: tuple = (64,)
    monotone_hidden: int = 64
    action_hidden: int = 64
    actor_final_init: float | None = 3e-3
    actor_weight_decay: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch size cannot exceed replay capacity")
        if self.penalty_samples < 0:
            raise ValueError("penalty_samples must be >= 0")
        if self.td_target_mode not in ("target_actor", "exact_max"):
            raise ValueError(f"unknown td_target_mode {self.td_target_mode!r}")


@dataclass(frozen=True)
class Transition:
    s_enc: np.ndarray
    a_raw: np.ndarray
    a_feasible: np.ndarray
    reward: float
    s_next_enc: np.ndarray
    raw_state: SystemState
    raw_next_state: SystemState


@dataclass
class Batch:
    """Column-oriented view of sampled transitions (one row per sample).

    a_enc is the executed behavior action as the critic sees it: the raw
    pre-projection output scaled to [0, 1].  Training the critic at these
    continuous points (rather than only at the feasibility-repaired corner
    encodings) gives the policy-gradient chain a surface with meaningful
    interior slopes; the repaired integer action is kept alongside for the
    effective-set machinery.
    """

    s_enc: np.ndarray
    a_enc: np.ndarray
    a_feasible: np.ndarray
    reward: np.ndarray
    s_next_enc: np.ndarray
    tau: np.ndarray
    h: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: list[Transition], num_channels: int) -> "Batch":
        return cls(
            s_enc=np.stack([t.s_enc for t in transitions]),
            a_enc=np.stack([t.a_raw for t in transitions]) / num_channels,
            a_feasible=np.stack([t.a_feasible for t in transitions]),
            reward=np.array([t.reward for t in transitions], dtype=float),
            s_next_enc=np.stack([t.s_next_enc for t in transitions]),
            tau=np.stack([t.raw_state.tau for t in transitions]),
            h=np.stack([t.raw_state.H for t in transitions]),
        )

    def __len__(self):
        return self.s_enc.shape[0]


class ReplayBuffer:
    """Ring buffer with uniform without-replacement batch sampling.

    Transitions are stored column-wise in preallocated arrays so a sampled
    batch is a handful of fancy-indexing gathers rather than a python loop.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._cols = None
        self._size = 0
        self._cursor = 0
        self.inserted = 0

    def _allocate(self, tr: Transition):
        cap = self.capacity
        n, m = tr.raw_state.tau.shape[0], tr.raw_state.H.shape[1]
        self._cols = {
            "s_enc": np.empty((cap, tr.s_enc.shape[0])),
            "a_raw": np.empty((cap, tr.a_raw.shape[0])),
            "a_feasible": np.empty((cap, n), dtype=np.int64),
            "reward": np.empty(cap),
            "s_next_enc": np.empty((cap, tr.s_next_enc.shape[0])),
            "tau": np.empty((cap, n), dtype=np.int64),
            "h": np.empty((cap, n, m), dtype=np.int64),
            "next_tau": np.empty((cap, n), dtype=np.int64),
            "next_h": np.empty((cap, n, m), dtype=np.int64),
        }

    def push(self, tr: Transition):
        if self._cols is None:
            self._allocate(tr)
        i = self._cursor
        c = self._cols
        c["s_enc"][i] = tr.s_enc
        c["a_raw"][i] = tr.a_raw
        c["a_feasible"][i] = tr.a_feasible
        c["reward"][i] = tr.reward
        c["s_next_enc"][i] = tr.s_next_enc
        c["tau"][i] = tr.raw_state.tau
        c["h"][i] = tr.raw_state.H
        c["next_tau"][i] = tr.raw_next_state.tau
        c["next_h"][i] = tr.raw_next_state.H
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.inserted += 1

    def __len__(self):
        return self._size

    def sample_batch(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if batch_size > self._size:
            raise ValueError("not enough transitions buffered")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        c = self._cols
        num_channels = c["h"].shape[2]
        return Batch(
            s_enc=c["s_enc"][idx],
            a_enc=c["a_raw"][idx] / num_channels,
            a_feasible=c["a_feasible"][idx],
            reward=c["reward"][idx],
            s_next_enc=c["s_next_enc"][idx],
            tau=c["tau"][idx],
            h=c["h"][idx],
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Object view of a sampled batch (API convenience; training uses
        sample_batch)."""
        if batch_size > self._size:
            raise ValueError("not enough transitions buffered")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        c = self._cols
        out = []
        for i in idx:
            out.append(
                Transition(
                    s_enc=c["s_enc"][i],
                    a_raw=c["a_raw"][i],
                    a_feasible=c["a_feasible"][i],
                    reward=float(c["reward"][i]),
                    s_next_enc=c["s_next_enc"][i],
                    raw_state=SystemState(tau=c["tau"][i], H=c["h"][i]),
                    raw_next_state=SystemState(tau=c["next_tau"][i], H=c["next_h"][i]),
                )
            )
        return out


class Agent:
    """Actor, critic, and their targets with per-network Adam state."""

    def __init__(
        self,
        state_dim: int,
        num_devices: int,
        num_channels: int,
        config: TrainConfig,
        rng: np.random.Generator,
    ):
        self.state_dim = state_dim
        self.num_devices = num_devices
        self.num_channels = num_channels
        self.config = config
        self.actor = Mlp(
            [state_dim, *config.actor_hidden, num_devices],
            hidden_activation="relu",
            output_activation="sigmoid",
            rng=rng,
            final_init_scale=config.actor_final_init,
        )
        if config.variant == "ma":
            self.critic = MonotoneCritic(
                state_dim,
                num_devices,
                state_hidden=config.monotone_hidden,
                action_hidden=config.action_hidden,
                rng=rng,
            )
        else:
            self.critic = MlpCritic(
                state_dim, num_devices, list(config.critic_hidden), rng=rng
            )
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        # adam and target updates run on the flat parameter buffers
        self.actor_adam = AdamState.for_params([self.actor.flat_params()])
        self.critic_adam = AdamState.for_params([self.critic.flat_params()])
        self._actions_enc = None  # lazy cache for exact-max targets

    def greedy_schedule(self, s_enc: np.ndarray) -> np.ndarray:
        """Feasible action of the noise-free policy."""
        u, _ = self.actor.forward(s_enc)
        return project_action(self.num_channels * u, self.num_devices, self.num_channels)


def select_action(
    agent: Agent, s_enc: np.ndarray, noise_sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Raw exploration output in [0, M]^N: scaled sigmoid plus clipped noise."""
    u, _ = agent.actor.forward(s_enc)
    m = agent.num_channels
    raw = m * u + rng.normal(0.0, 1.0, size=agent.num_devices) * noise_sigma
    return np.clip(raw, 0.0, m)


def project_action(raw, num_devices: int, num_channels: int) -> np.ndarray:
    """Deterministic repair of a raw vector into a feasible schedule.

    Each device prefers channel round(raw_n); a channel claimed by several
    devices keeps the one whose raw value is closest (ties to the lowest
    device index); every channel left unclaimed is force-assigned to the
    idle device with the largest raw value (ties to the lowest index).
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (num_devices,):
        raise ValueError(f"raw action must have shape ({num_devices},)")
    pref = np.clip(np.floor(raw + 0.5).astype(np.int64), 0, num_channels)
    a = np.zeros(num_devices, dtype=np.int64)
    for ch in range(1, num_channels + 1):
        cands = np.flatnonzero(pref == ch)
        if cands.size:
            a[cands[np.argmin(np.abs(raw[cands] - ch))]] = ch
    for ch in range(1, num_channels + 1):
        if ch not in a:
            idle = np.flatnonzero(a == 0)
            a[idle[np.argmax(raw[idle])]] = ch
    return a


def encode_action(a, num_channels: int) -> np.ndarray:
    """Critic action input: a_n / M per coordinate."""
    return np.asarray(a, dtype=float) / num_channels


def effective_set(raw_state: SystemState, a, num_devices: int, num_channels: int) -> np.ndarray:
    """Encoded-state indices whose increase can change Q under action a:
    every age index plus the (n, m) channel index for each scheduled pair."""
    a = np.asarray(a, dtype=np.int64)
    if not validate_action(a, num_devices, num_channels):
        raise ValueError("effective set requires a feasible action")
    idx = list(range(num_devices))
    for n in range(num_devices):
        if a[n] > 0:
            idx.append(num_devices + n * num_channels + (a[n] - 1))
    return np.array(idx, dtype=np.int64)


def sample_penalty_indices(indices, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform subset of size min(k, len(indices)) without replacement."""
    indices = np.asarray(indices, dtype=np.int64)
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if k >= indices.size:
        return indices.copy()
    return rng.choice(indices, size=k, replace=False)


def increment_state(state: SystemState, j: int, num_channels: int, levels: int):
    """One-step raw increment of coordinate j; None if a channel is already
    at the top level.  Ages may exceed the environment cap (the encoding
    extrapolates linearly)."""
    n = state.num_devices
    if j < n:
        tau = state.tau.copy()
        tau[j] += 1
        return SystemState(tau=tau, H=state.H)
    dev, ch = divmod(j - n, num_channels)
    if state.H[dev, ch] >= levels:
        return None
    h = state.H.copy()
    h[dev, ch] += 1
    return SystemState(tau=state.tau, H=h)


def penalty_type1(critic, s_enc, a_enc, indices) -> float:
    """Positive-derivative penalty: sum over indices of max(0, dQ/ds_j)."""
    _, ds = critic.state_grad(s_enc, a_enc)
    ds = np.atleast_2d(ds)[0]
    sel = ds[np.asarray(indices, dtype=np.int64)]
    return float(np.sum(np.maximum(sel, 0.0)))


def penalty_type2(critic, raw_state: SystemState, a, indices, env: SchedulingEnv) -> float:
    """Positive-increment penalty: sum of max(0, Q(s + e_j, a) - Q(s, a)),
    forward passes only.  Channel coordinates already at the top level are
    skipped."""
    a_enc = encode_action(a, env.num_channels)
    q0, _ = critic.forward(env.encode(raw_state), a_enc)
    total = 0.0
    for j in np.asarray(indices, dtype=np.int64):
        bumped = increment_state(raw_state, int(j), env.num_channels, env.levels)
        if bumped is None:
            continue
        q1, _ = critic.forward(env.encode(bumped), a_enc)
        total += max(0.0, float(q1[0] - q0[0]))
    return total


def _as_batch(batch, num_channels: int) -> Batch:
    if isinstance(batch, Batch):
        return batch
    return Batch.from_transitions(batch, num_channels)


def _candidate_matrix(batch: Batch, num_devices: int, num_channels: int) -> np.ndarray:
    """Per-sample effective coordinate sets as a (B, N+M) index matrix:
    ages first, then the channel coordinates the action used (device order)."""
    b = len(batch)
    cand = np.empty((b, num_devices + num_channels), dtype=np.int64)
    cand[:, :num_devices] = np.arange(num_devices)
    rows, devs = np.nonzero(batch.a_feasible > 0)
    ch_idx = num_devices + devs * num_channels + (batch.a_feasible[rows, devs] - 1)
    cand[:, num_devices:] = ch_idx.reshape(b, num_channels)
    return cand


def td_target(agent: Agent, r: np.ndarray, s_next: np.ndarray, config: TrainConfig) -> np.ndarray:
    """Bootstrap targets from the target networks (no gradient flows here).

    target_actor: y = r + gamma * Q'(s+, repair(actor'(s+))); exact_max
    enumerates every feasible action (small systems only) and takes the max.
    """
    if config.td_target_mode == "target_actor":
        u, _ = agent.target_actor.forward(s_next)
        a_enc = np.empty_like(u)
        m = agent.num_channels
        for i in range(u.shape[0]):
            a = project_action(m * u[i], agent.num_devices, m)
            a_enc[i] = encode_action(a, m)
        q, _ = agent.target_critic.forward(s_next, a_enc)
        return r + config.gamma * q
    if agent._actions_enc is None:
        actions = enumerate_actions(agent.num_devices, agent.num_channels)
        if len(actions) > config.exact_max_action_limit:
            raise ValueError(
                f"{len(actions)} feasible actions exceed the exact-max limit "
                f"of {config.exact_max_action_limit}"
            )
        agent._actions_enc = actions / agent.num_channels
    enc = agent._actions_enc
    b, num_a = s_next.shape[0], enc.shape[0]
    # one stacked forward over all (action, sample) pairs
    s_rep = np.repeat(s_next[None, :, :], num_a, axis=0).reshape(num_a * b, -1)
    a_rep = np.repeat(enc[:, None, :], b, axis=1).reshape(num_a * b, -1)
    q, _ = agent.target_critic.forward(s_rep, a_rep)
    best = q.reshape(num_a, b).max(axis=0)
    return r + config.gamma * best


def _sample_candidates(
    cand: np.ndarray, valid: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-row uniform without-replacement draw of up to k valid candidate
    columns; invalid draws are passed over (re-sampled).  Returns a boolean
    pick mask over cand's columns."""
    b, width = cand.shape
    order = rng.permuted(np.broadcast_to(np.arange(width), (b, width)), axis=1)
    picked = np.zeros((b, width), dtype=bool)
    taken = np.zeros(b, dtype=np.int64)
    rows = np.arange(b)
    for col in range(width):
        j = order[:, col]
        ok = valid[rows, j] & (taken < k)
        picked[rows[ok], j[ok]] = True
        taken += ok
    return picked


def critic_update(
    agent: Agent,
    batch,
    config: TrainConfig,
    env: SchedulingEnv,
    rng: np.random.Generator,
    lr: float,
) -> tuple[float, float]:
    """One critic step on a batch; returns (loss, mean penalty).

    Loss is mean(TD^2 + weight * penalty); the penalty term and its exact
    parameter gradient depend on the variant.  The MA variant re-projects
    the weight signs after the Adam step.
    """
    batch = _as_batch(batch, agent.num_channels)
    b = len(batch)
    s, a_enc, r, s_next = batch.s_enc, batch.a_enc, batch.reward, batch.s_next_enc
    y = td_target(agent, r, s_next, config)
    q, cache = agent.critic.forward(s, a_enc)
    td = q - y
    dq = 2.0 * td / b
    lam = config.penalty_weight
    k = config.penalty_samples
    penalties = np.zeros(b)
    extra_grads = None
    n, m = agent.num_devices, agent.num_channels

    if config.variant == "mri" and k > 0:
        _, ds = agent.critic.state_grad(s, a_enc)
        cand = _candidate_matrix(batch, n, m)
        picked = _sample_candidates(cand, np.ones_like(cand, dtype=bool), k, rng)
        masks = np.zeros_like(s)
        rows, cols = np.nonzero(picked)
        j = cand[rows, cols]
        pos = ds[rows, j] > 0
        masks[rows[pos], j[pos]] = 1.0
        np.add.at(penalties, rows[pos], ds[rows[pos], j[pos]])
        if pos.any():
            extra_grads = agent.critic.mixed_backward(
                s, a_enc, masks, np.full(b, lam / b)
            )

    if config.variant == "mrii" and k > 0:
        cand = _candidate_matrix(batch, n, m)
        # ages may always grow; a channel coordinate only below the top level
        valid = np.ones_like(cand, dtype=bool)
        ch = cand[:, n:] - n
        dev, chan = ch // m, ch % m
        valid[:, n:] = batch.h[np.arange(b)[:, None], dev, chan] < env.levels
        picked = _sample_candidates(cand, valid, k, rng)
        rows, cols = np.nonzero(picked)
        if rows.size:
            j = cand[rows, cols]
            inc_s = s[rows].copy()
            age = j < n
            inc_s[age, j[age]] = (batch.tau[rows[age], j[age]] + 1) / env.tau_max
            cj = j[~age] - n
            inc_s[~age, j[~age]] = (
                batch.h[rows[~age], cj // m, cj % m] + 1
            ) / env.levels
            q_inc, cache_inc = agent.critic.forward(inc_s, a_enc[rows])
            qi = q_inc - q[rows]
            active = qi > 0
            np.add.at(penalties, rows[active], qi[active])
            seeds = np.where(active, lam / b, 0.0)
            np.subtract.at(dq, rows[active], lam / b)
            extra_grads, _ = agent.critic.backward(cache_inc, seeds)

    grads, _ = agent.critic.backward(cache, dq)
    flat = flatten_grads(grads)
    if extra_grads is not None:
        flat += flatten_grads(extra_grads)
    adam_step([agent.critic.flat_params()], [flat], agent.critic_adam, lr)
    if config.variant == "ma":
        agent.critic.project()
    loss = float(np.mean(td**2) + lam * penalties.mean())
    return loss, float(penalties.mean())


def actor_update(agent: Agent, batch, lr: float, weight_decay: float = 0.0) -> float:
    """Deterministic policy gradient step: raise mean Q(s, actor(s)).

    The critic's action input is the actor's sigmoid output itself (the
    feasibility repair is bypassed for gradients and applied only when
    acting in the environment).  A small L2 weight decay keeps the squashed
    outputs away from hard saturation so the policy can keep re-ordering
    devices per state.
    """
    batch = _as_batch(batch, agent.num_channels)
    s = batch.s_enc
    b = s.shape[0]
    u, cache_a = agent.actor.forward(s)
    q, cache_c = agent.critic.forward(s, u)
    _, (_, da) = agent.critic.backward(
        cache_c, np.full(b, -1.0 / b), need_param_grads=False
    )
    grads, _ = agent.actor.backward(cache_a, da)
    flat = flatten_grads(grads)
    if weight_decay > 0.0:
        flat += weight_decay * agent.actor.flat_params()
    adam_step([agent.actor.flat_params()], [flat], agent.actor_adam, lr)
    return float(-q.mean())


@dataclass
class TrainStreams:
    """Independent RNG streams so exploration, environment, replay sampling,
    and penalty sampling can be varied separately."""

    noise: np.random.Generator
    env: np.random.Generator
    replay: np.random.Generator
    penalty: np.random.Generator

    @classmethod
    def from_seed_seq(cls, ss: np.random.SeedSequence) -> "TrainStreams":
        children = ss.spawn(4)
        return cls(*(np.random.default_rng(c) for c in children))

    @classmethod
    def from_seed(cls, seed: int) -> "TrainStreams":
        return cls.from_seed_seq(np.random.SeedSequence(seed))


@dataclass
class EpisodeMetrics:
    episode: int
    avg_sum_cost: float
    critic_loss: float
    actor_loss: float
    penalty: float
    wall_seconds: float


def noise_sigma(config: TrainConfig, episode: int, num_channels: int) -> float:
    """Linear decay from start_frac*M to end_frac*M over the first half of
    training, constant afterwards."""
    half = max(1.0, config.episodes / 2.0)
    frac = min(1.0, episode / half)
    level = config.noise_start_frac * (1.0 - frac) + config.noise_end_frac * frac
    return level * num_channels


def train(
    agent: Agent,
    env: SchedulingEnv,
    config: TrainConfig,
    metrics_sink=None,
    streams: TrainStreams | None = None,
    seed: int = 0,
) -> Agent:
    """Run the episode loop; emits one EpisodeMetrics row per episode.

    Raises TrainingDivergedError (with the episode index) if any parameter
    goes non-finite.
    """
    if streams is None:
        streams = TrainStreams.from_seed(seed)
    buffer = ReplayBuffer(config.replay_capacity)
    warmup = config.warmup_batches * config.batch_size
    for episode in range(config.episodes):
        t0 = time.perf_counter()
        if not (all_finite(agent.actor.params()) and all_finite(agent.critic.params())):
            raise TrainingDivergedError(
                episode, f"non-finite parameters entering episode {episode}"
            )
        sigma = noise_sigma(config, episode, agent.num_channels)
        lr_a = config.lr_actor / (1.0 + config.lr_decay * episode)
        lr_c = config.lr_critic / (1.0 + config.lr_decay * episode)
        state = env.reset(streams.env)
        cost_sum = 0.0
        closses, alosses, pens = [], [], []
        for _ in range(config.horizon):
            s_enc = env.encode(state)
            raw = select_action(agent, s_enc, sigma, streams.noise)
            a = project_action(raw, agent.num_devices, agent.num_channels)
            out = env.step(state, a, streams.env)
            buffer.push(
                Transition(
                    s_enc=s_enc,
                    a_raw=raw,
                    a_feasible=a,
                    reward=out.reward,
                    s_next_enc=env.encode(out.next_state),
                    raw_state=state,
                    raw_next_state=out.next_state,
                )
            )
            cost_sum += -out.reward
            if len(buffer) >= warmup:
                batch = buffer.sample_batch(config.batch_size, streams.replay)
                closs, pen = critic_update(
                    agent, batch, config, env, streams.penalty, lr_c
                )
                aloss = actor_update(agent, batch, lr_a, config.actor_weight_decay)
                soft_update(
                    [agent.target_critic.flat_params()],
                    [agent.critic.flat_params()],
                    config.delta,
                )
                soft_update(
                    [agent.target_actor.flat_params()],
                    [agent.actor.flat_params()],
                    config.delta,
                )
                closses.append(closs)
                alosses.append(aloss)
                pens.append(pen)
            state = out.next_state
        if not (all_finite(agent.actor.params()) and all_finite(agent.critic.params())):
            raise TrainingDivergedError(
                episode, f"non-finite parameters after episode {episode}"
            )
        if metrics_sink is not None:
            metrics_sink(
                EpisodeMetrics(
                    episode=episode,
                    avg_sum_cost=cost_sum / config.horizon,
                    critic_loss=float(np.mean(closses)) if closses else 0.0,
                    actor_loss=float(np.mean(alosses)) if alosses else 0.0,
                    penalty=float(np.mean(pens)) if pens else 0.0,
                    wall_seconds=time.perf_counter() - t0,
                )
            )
    return agent
