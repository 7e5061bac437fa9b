"""Exact tabular solver for small scheduling instances.

Enumerates the capped state space (tau in 1..tau_max per device, level in
1..levels per device-channel pair) and all feasible assignments, runs value
iteration to a certified sup-norm error, and brute-force checks the
structural properties of the optimal Q table: Q is non-increasing in every
age coordinate, non-increasing in the level of any channel the action uses,
and exactly invariant to the level of any unused channel.

Because channels are i.i.d. across steps, the successor expectation factors
as E[V(tau+, H+)] = sum_{tau+} Pr(tau+) Vbar(tau+) with Vbar the
H-marginalized value, which keeps sweeps cheap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelModel, sample_channel_matrices
from .env import SchedulingEnv, SystemState
from .estimation import CostModel


class CapacityError(RuntimeError):
    """Requested enumeration exceeds the configured state/action limit."""


class SolverConvergenceError(RuntimeError):
    """Value iteration did not reach the target accuracy within max_sweeps."""


DEFAULT_STATE_LIMIT = 5_000_000


def enumerate_actions(num_devices: int, num_channels: int) -> np.ndarray:
    """All feasible schedules: injective maps channel -> device, as (A, N) rows."""
    if num_channels > num_devices:
        raise ValueError("cannot assign more channels than devices")
    actions = []
    for devices in itertools.permutations(range(num_devices), num_channels):
        a = np.zeros(num_devices, dtype=np.int64)
        for ch, dev in enumerate(devices, start=1):
            a[dev] = ch
        actions.append(a)
    return np.array(actions, dtype=np.int64)


def _mixed_radix_states(digits: int, base: int) -> np.ndarray:
    """All tuples in {1..base}^digits, lexicographic, first digit slowest."""
    grids = np.meshgrid(*[np.arange(1, base + 1)] * digits, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def enumerate_states(
    num_devices: int,
    num_channels: int,
    tau_max: int,
    levels: int,
    limit: int = DEFAULT_STATE_LIMIT,
) -> list[SystemState]:
    """Lexicographic state list (ages vary slowest); index i is recoverable
    via TabularMdp.state_index."""
    total = tau_max**num_devices * levels ** (num_devices * num_channels)
    if total > limit:
        raise CapacityError(f"{total} states exceed the limit of {limit}")
    taus = _mixed_radix_states(num_devices, tau_max)
    hs = _mixed_radix_states(num_devices * num_channels, levels)
    return [
        SystemState(tau=t, H=h.reshape(num_devices, num_channels))
        for t in taus
        for h in hs
    ]


@dataclass
class ValueTables:
    """Converged value tables: V indexed (tau_idx, h_idx), Q additionally by action."""

    V: np.ndarray
    Q: np.ndarray
    sweeps: int
    bellman_residual: float
    deltas: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass(frozen=True)
class Violation:
    kind: str  # q_aoi | v_aoi | q_channel_used | q_channel_unused
    device: int
    channel: int | None
    low: int
    high: int
    q_low: float
    q_high: float

    @property
    def gap(self) -> float:
        return self.q_high - self.q_low


class TabularMdp:
    """Enumerated scheduling MDP over the capped state space.

    Flat state index is tau_idx * num_h_states + h_idx with both sub-indices
    mixed-radix (device 0 / position (0,0) most significant).
    """

    def __init__(
        self,
        model: ChannelModel,
        costs: list[CostModel],
        gamma: float,
        tau_max: int,
        state_limit: int = DEFAULT_STATE_LIMIT,
    ):
        if not 0 < gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        n, m, levels = model.num_devices, model.num_channels, model.levels
        if len(costs) != n:
            raise ValueError("need one cost model per device")
        total = tau_max**n * levels ** (n * m)
        if total > state_limit:
            raise CapacityError(f"{total} states exceed the limit of {state_limit}")
        self.model = model
        self.costs = costs
        self.gamma = gamma
        self.tau_max = tau_max
        self.num_devices = n
        self.num_channels = m
        self.levels = levels

        self.actions = enumerate_actions(n, m)
        assert len(self.actions) == math.perm(n, m)
        self.tau_states = _mixed_radix_states(n, tau_max)
        self.h_states = _mixed_radix_states(n * m, levels).reshape(-1, n, m)
        self.num_tau_states = self.tau_states.shape[0]
        self.num_h_states = self.h_states.shape[0]
        self.num_states = self.num_tau_states * self.num_h_states

        self._tau_weights = tau_max ** np.arange(n - 1, -1, -1)
        self._h_weights = levels ** np.arange(n * m - 1, -1, -1)

        # Pr(H): kron over positions in radix order (position 0 slowest)
        prh = np.ones(1)
        for i in range(n):
            for j in range(m):
                prh = np.kron(prh, model.level_probs[i, j])
        self.prH = prh

        cost_tables = np.stack([c.table[:tau_max] for c in costs])
        self.rewards_tau = -cost_tables[
            np.arange(n)[None, :], self.tau_states - 1
        ].sum(axis=1)

        self._precompute_transitions()

    def _precompute_transitions(self):
        cap = self.tau_max
        grown_idx_digits = np.minimum(self.tau_states + 1, cap) - 1  # (S_tau, N)
        self._per_action = []
        for a in self.actions:
            sched = np.flatnonzero(a > 0)
            chans = a[sched] - 1
            # drop prob per h-state for each scheduled device
            p = np.empty((self.num_h_states, len(sched)))
            for j, (dev, ch) in enumerate(zip(sched, chans)):
                p[:, j] = self.model.drop_probs[dev, ch, self.h_states[:, dev, ch] - 1]
            subsets = []
            for bits in itertools.product((0, 1), repeat=len(sched)):
                bits = np.array(bits, dtype=bool)
                prob = np.prod(np.where(bits, 1.0 - p, p), axis=1)
                digits = grown_idx_digits.copy()
                digits[:, sched[bits]] = 0  # delivered -> age 1 -> digit 0
                next_idx = digits @ self._tau_weights
                subsets.append((prob, next_idx))
            self._per_action.append(subsets)

    # ---- index mapping ----
    def tau_index(self, tau) -> int:
        return int((np.asarray(tau) - 1) @ self._tau_weights)

    def h_index(self, H) -> int:
        return int((np.asarray(H).ravel() - 1) @ self._h_weights)

    def state_index(self, state: SystemState) -> int:
        return self.tau_index(state.tau) * self.num_h_states + self.h_index(state.H)

    def state_from_index(self, idx: int) -> SystemState:
        tau_idx, h_idx = divmod(idx, self.num_h_states)
        return SystemState(
            tau=self.tau_states[tau_idx],
            H=self.h_states[h_idx],
        )

    def make_env(self) -> SchedulingEnv:
        return SchedulingEnv(self.model, self.costs, self.tau_max)


def _q_backup(mdp: TabularMdp, V: np.ndarray) -> np.ndarray:
    """One Bellman application: Q[tau, h, a] = r(tau) + gamma * E[V(next)]."""
    vbar = V @ mdp.prH
    q = np.empty((mdp.num_tau_states, mdp.num_h_states, len(mdp.actions)))
    for k, subsets in enumerate(mdp._per_action):
        acc = np.zeros((mdp.num_tau_states, mdp.num_h_states))
        for prob, next_idx in subsets:
            acc += vbar[next_idx][:, None] * prob[None, :]
        q[:, :, k] = mdp.rewards_tau[:, None] + mdp.gamma * acc
    return q


def value_iteration(
    mdp: TabularMdp, tol: float = 1e-12, max_sweeps: int = 100_000
) -> ValueTables:
    """Solve to certified sup-norm error below tol.

    Sweeps stop once the per-sweep change drops below tol * (1 - gamma) /
    gamma, which bounds the distance to the fixed point by tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    threshold = tol * (1.0 - mdp.gamma) / mdp.gamma
    V = np.zeros((mdp.num_tau_states, mdp.num_h_states))
    deltas = []
    best = np.inf
    stalled = 0
    for sweep in range(1, max_sweeps + 1):
        V_new = _q_backup(mdp, V).max(axis=2)
        delta = float(np.max(np.abs(V_new - V)))
        deltas.append(delta)
        V = V_new
        # once per-sweep changes sit at float resolution without improving,
        # the iteration has reached the arithmetic fixed point neighborhood
        plateau = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(V))))
        if delta < best:
            best, stalled = delta, 0
        else:
            stalled += 1
        if delta < threshold or (delta <= plateau and stalled >= 100):
            Q = _q_backup(mdp, V)
            residual = float(np.max(np.abs(Q.max(axis=2) - V)))
            return ValueTables(
                V=V,
                Q=Q,
                sweeps=sweep,
                bellman_residual=residual,
                deltas=np.array(deltas),
            )
    raise SolverConvergenceError(
        f"no convergence in {max_sweeps} sweeps (last delta {deltas[-1]:g})"
    )


def q_from_v(mdp: TabularMdp, V: np.ndarray) -> np.ndarray:
    """Q table induced by a converged V."""
    return _q_backup(mdp, V)


def _pair_violations(arr, axis_size, kind, device, channel, eps, equality, cap):
    """Compare all ordered coordinate pairs along the second axis of
    arr (groups, axis_size, rest...) and collect violations."""
    out = []
    for lo in range(axis_size - 1):
        for hi in range(lo + 1, axis_size):
            diff = arr[:, hi] - arr[:, lo]
            bad = np.abs(diff) > eps if equality else diff > eps
            if not bad.any():
                continue
            vals_hi = arr[:, hi][bad]
            vals_lo = arr[:, lo][bad]
            take = min(len(vals_hi), cap - len(out))
            for qh, ql in zip(vals_hi[:take], vals_lo[:take]):
                out.append(
                    Violation(
                        kind=kind,
                        device=device,
                        channel=channel,
                        low=lo + 1,
                        high=hi + 1,
                        q_low=float(ql),
                        q_high=float(qh),
                    )
                )
            if len(out) >= cap:
                return out
    return out


def check_aoi_monotonicity(
    tables: ValueTables, mdp: TabularMdp, eps: float = 1e-9, max_violations: int = 1000
) -> list[Violation]:
    """Flag Q(s with larger tau_n, a) > Q(s, a) + eps for any device n, and
    the same for V.  Empty list = age monotonicity holds everywhere."""
    violations: list[Violation] = []
    n, cap = mdp.num_devices, mdp.tau_max
    for dev in range(n):
        pre = cap**dev
        q = tables.Q.reshape(pre, cap, -1)
        violations += _pair_violations(
            q, cap, "q_aoi", dev, None, eps, False, max_violations - len(violations)
        )
        v = tables.V.reshape(pre, cap, -1)
        violations += _pair_violations(
            v, cap, "v_aoi", dev, None, eps, False, max_violations - len(violations)
        )
        if len(violations) >= max_violations:
            break
    return violations


def check_channel_monotonicity(
    tables: ValueTables, mdp: TabularMdp, eps: float = 1e-9, max_violations: int = 1000
) -> list[Violation]:
    """Used channels: Q non-increasing in the level (part i).  Unused
    channels: Q exactly level-invariant (part ii, tolerance eps)."""
    violations: list[Violation] = []
    n, m, lv = mdp.num_devices, mdp.num_channels, mdp.levels
    for dev in range(n):
        for ch in range(m):
            pos = dev * m + ch
            pre = lv**pos
            post = lv ** (n * m - 1 - pos)
            q = tables.Q.reshape(mdp.num_tau_states, pre, lv, post, len(mdp.actions))
            used = np.flatnonzero(mdp.actions[:, dev] == ch + 1)
            unused = np.flatnonzero(mdp.actions[:, dev] != ch + 1)
            for kind, cols, equality in (
                ("q_channel_used", used, False),
                ("q_channel_unused", unused, True),
            ):
                if cols.size == 0:
                    continue
                sub = q[..., cols]  # (S_tau, pre, lv, post, |cols|)
                grouped = np.moveaxis(sub, 2, 1).reshape(mdp.num_tau_states, lv, -1)
                violations += _pair_violations(
                    grouped,
                    lv,
                    kind,
                    dev,
                    ch,
                    eps,
                    equality,
                    max_violations - len(violations),
                )
                if len(violations) >= max_violations:
                    return violations
    return violations


def greedy_action_table(tables: ValueTables, mdp: TabularMdp) -> np.ndarray:
    """argmax_a Q per flat state (ties to the lowest action index)."""
    return tables.Q.reshape(mdp.num_states, -1).argmax(axis=1)


def greedy_policy(tables: ValueTables, mdp: TabularMdp):
    """State -> action function induced by the Q table."""
    table = greedy_action_table(tables, mdp)

    def policy(state: SystemState):
        return mdp.actions[table[mdp.state_index(state)]]

    return policy


def expected_initial_value(tables: ValueTables, mdp: TabularMdp) -> float:
    """E_H[V(all ages 1, H)] under the stationary channel law."""
    return float(tables.V[0] @ mdp.prH)


@dataclass
class PolicyEvaluation:
    avg_discounted_return: float
    avg_sum_cost: float
    returns: np.ndarray

    @property
    def std_error(self) -> float:
        return float(self.returns.std(ddof=1) / np.sqrt(len(self.returns)))


def evaluate_policy(
    policy,
    env: SchedulingEnv,
    rng: np.random.Generator,
    episodes: int,
    horizon: int,
    gamma: float,
) -> PolicyEvaluation:
    """Monte Carlo rollouts of a state -> action function."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    returns = np.empty(episodes)
    cost_total = 0.0
    for ep in range(episodes):
        state = env.reset(rng)
        disc = 0.0
        g = 1.0
        for _ in range(horizon):
            out = env.step(state, policy(state), rng)
            disc += g * out.reward
            cost_total += -out.reward
            g *= gamma
            state = out.next_state
        returns[ep] = disc
    return PolicyEvaluation(
        avg_discounted_return=float(returns.mean()),
        avg_sum_cost=cost_total / (episodes * horizon),
        returns=returns,
    )


def evaluate_action_table(
    table: np.ndarray,
    mdp: TabularMdp,
    rng: np.random.Generator,
    episodes: int,
    horizon: int,
) -> PolicyEvaluation:
    """Vectorized Monte Carlo over many parallel episodes for a tabulated
    policy (flat state index -> action index).  Uses its own draw layout, so
    it is statistically, not samplewise, equivalent to evaluate_policy."""
    n, m = mdp.num_devices, mdp.num_channels
    tau = np.ones((episodes, n), dtype=np.int64)
    h = sample_channel_matrices(mdp.model, rng, episodes)
    disc = np.zeros(episodes)
    cost_total = 0.0
    g = 1.0
    for _ in range(horizon):
        tau_idx = (tau - 1) @ mdp._tau_weights
        h_idx = (h.reshape(episodes, -1) - 1) @ mdp._h_weights
        r = mdp.rewards_tau[tau_idx]
        disc += g * r
        cost_total += float(-r.sum())
        g *= mdp.gamma
        acts = mdp.actions[table[tau_idx * mdp.num_h_states + h_idx]]
        u = rng.random((episodes, n))
        delivered = np.zeros((episodes, n), dtype=bool)
        for dev in range(n):
            sel = acts[:, dev] > 0
            if not sel.any():
                continue
            ch = acts[sel, dev] - 1
            lvl = h[sel, dev, ch] - 1
            p = mdp.model.drop_probs[dev, ch, lvl]
            delivered[sel, dev] = u[sel, dev] >= p
        tau = np.where(delivered, 1, np.minimum(tau + 1, mdp.tau_max))
        h = sample_channel_matrices(mdp.model, rng, episodes)
    return PolicyEvaluation(
        avg_discounted_return=float(disc.mean()),
        avg_sum_cost=cost_total / (episodes * horizon),
        returns=disc,
    )
