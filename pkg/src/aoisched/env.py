"""Scheduling MDP: state (tau, H), feasible assignment actions, step dynamics.

State is the per-device age vector plus the current channel-level matrix.
An action assigns each of the M channels to exactly one distinct device
(remaining devices idle).  A scheduled transmission succeeds with
probability 1 - p(level); on success the device's age resets to 1, otherwise
it grows by one (saturating at tau_max).  The reward is the negative sum of
the per-device staleness costs of the *current* state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel, sample_channel_matrix
from .estimation import CostModel, aoi_cost


@dataclass(frozen=True)
class SystemState:
    """Age vector tau (entries >= 1) and channel matrix H (levels, 1-based)."""

    tau: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        tau = np.array(self.tau, dtype=np.int64)
        H = np.array(self.H, dtype=np.int64)
        if tau.ndim != 1:
            raise ValueError("tau must be a vector")
        if H.ndim != 2 or H.shape[0] != tau.shape[0]:
            raise ValueError("H must be an N x M matrix matching tau")
        if np.any(tau < 1):
            raise ValueError("ages must be >= 1")
        if np.any(H < 1):
            raise ValueError("channel levels are 1-based")
        tau.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "H", H)

    @property
    def num_devices(self) -> int:
        return self.tau.shape[0]

    @property
    def num_channels(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class StepOutcome:
    next_state: SystemState
    reward: float
    delivered: np.ndarray


def validate_action(a, num_devices: int, num_channels: int) -> bool:
    """True iff entries lie in 0..M and every channel is used exactly once."""
    a = np.asarray(a)
    if a.shape != (num_devices,):
        return False
    if np.any(a < 0) or np.any(a > num_channels):
        return False
    counts = np.bincount(a.astype(np.int64), minlength=num_channels + 1)
    return bool(np.all(counts[1:] == 1))


def _require_feasible(a, num_devices, num_channels) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    if not validate_action(a, num_devices, num_channels):
        raise ValueError(f"infeasible schedule {a.tolist()} for N={num_devices}, M={num_channels}")
    return a


def reward(state: SystemState, costs: list[CostModel]) -> float:
    """Negative sum of per-device staleness costs at the current ages."""
    return -sum(aoi_cost(c, int(t)) for c, t in zip(costs, state.tau))


def step(
    state: SystemState,
    action,
    model: ChannelModel,
    costs: list[CostModel],
    rng: np.random.Generator,
    tau_max: int,
) -> StepOutcome:
    """One transition.  Draw order is fixed: one uniform per scheduled device
    in device order, then the fresh channel matrix."""
    n, m = state.num_devices, state.num_channels
    a = _require_feasible(action, n, m)
    r = reward(state, costs)
    delivered = np.zeros(n, dtype=bool)
    for i in range(n):
        if a[i] > 0:
            p = model.drop_probs[i, a[i] - 1, state.H[i, a[i] - 1] - 1]
            delivered[i] = rng.random() >= p
    tau_next = np.where(delivered, 1, np.minimum(state.tau + 1, tau_max))
    h_next = sample_channel_matrix(model, rng)
    return StepOutcome(
        next_state=SystemState(tau=tau_next, H=h_next),
        reward=r,
        delivered=delivered,
    )


def transition_prob(
    state: SystemState,
    action,
    next_state: SystemState,
    model: ChannelModel,
    tau_max: int,
) -> float:
    """Exact Pr(next | state, action): per-device age factors times Pr(H+).

    Ages saturate at tau_max, so the capped failure outcome absorbs the
    grow-by-one mass.  Returns 0 for impossible transitions.
    """
    n, m = state.num_devices, state.num_channels
    a = _require_feasible(action, n, m)
    prob = 1.0
    for i in range(n):
        grown = min(int(state.tau[i]) + 1, tau_max)
        nxt = int(next_state.tau[i])
        if a[i] == 0:
            factor = 1.0 if nxt == grown else 0.0
        else:
            p = model.drop_probs[i, a[i] - 1, state.H[i, a[i] - 1] - 1]
            factor = 0.0
            if nxt == 1:
                factor += 1.0 - p
            if nxt == grown:  # merges with success when tau_max == 1
                factor += p
        prob *= factor
        if prob == 0.0:
            return 0.0
    levels_idx = next_state.H - 1
    rows = np.arange(n)[:, None]
    cols = np.arange(m)[None, :]
    prob *= float(np.prod(model.level_probs[rows, cols, levels_idx]))
    return prob


def reset(model: ChannelModel, costs: list[CostModel], rng: np.random.Generator) -> SystemState:
    """Fresh start: every age at 1, channels drawn from q."""
    return SystemState(
        tau=np.ones(model.num_devices, dtype=np.int64),
        H=sample_channel_matrix(model, rng),
    )


def encode_state(state: SystemState, tau_max: int, levels: int) -> np.ndarray:
    """Flat NN encoding: ages / tau_max then row-major levels / levels.

    Layout: [tau_1, ..., tau_N, h_11, h_12, ..., h_1M, h_21, ..., h_NM],
    each normalized.  Ages are not clamped, so values above tau_max encode
    linearly past 1.
    """
    return np.concatenate(
        [state.tau / tau_max, state.H.ravel() / levels]
    ).astype(float)


class SchedulingEnv:
    """Bundles (channel model, cost models, tau_max) behind reset/step/encode."""

    def __init__(self, model: ChannelModel, costs: list[CostModel], tau_max: int):
        if len(costs) != model.num_devices:
            raise ValueError("need one cost model per device")
        if model.num_channels >= model.num_devices:
            raise ValueError("requires M < N channels")
        self.model = model
        self.costs = costs
        self.tau_max = tau_max
        self.num_devices = model.num_devices
        self.num_channels = model.num_channels
        self.levels = model.levels
        self.state_dim = self.num_devices * (self.num_channels + 1)
        self.action_dim = self.num_devices

    def reset(self, rng: np.random.Generator) -> SystemState:
        return reset(self.model, self.costs, rng)

    def step(self, state: SystemState, action, rng: np.random.Generator) -> StepOutcome:
        return step(state, action, self.model, self.costs, rng, self.tau_max)

    def reward(self, state: SystemState) -> float:
        return reward(state, self.costs)

    def encode(self, state: SystemState) -> np.ndarray:
        return encode_state(state, self.tau_max, self.levels)

    def sum_cost(self, state: SystemState) -> float:
        return -reward(state, self.costs)
