import itertools

import numpy as np
import pytest

from aoisched.channel import ChannelModel
from aoisched.env import (
    SchedulingEnv,
    SystemState,
    encode_state,
    reset,
    reward,
    step,
    transition_prob,
    validate_action,
)
from aoisched.estimation import CostModel


def flat_model(n, m, levels, drop):
    """Uniform level probabilities, one shared drop value per level (scalar or list)."""
    q = np.full((n, m, levels), 1.0 / levels)
    drop = np.atleast_1d(np.asarray(drop, dtype=float))
    if drop.shape == (1,):
        drop = np.repeat(drop, levels)
    p = np.broadcast_to(drop, (n, m, levels)).copy()
    return ChannelModel(n, m, levels, level_probs=q, drop_probs=p)


def linear_costs(n, tau_max):
    return [CostModel.from_table(np.arange(1, tau_max + 1, dtype=float)) for _ in range(n)]


class TestValidateAction:
    def test_single_channel_ok(self):
        assert validate_action([0, 1, 0], 3, 1)

    def test_double_assignment_rejected(self):
        assert not validate_action([1, 1, 0], 3, 1)

    def test_unassigned_channel_rejected(self):
        # channel 2 unused violates the equality constraint
        assert not validate_action([0, 0, 1], 3, 2)

    def test_out_of_range_entry(self):
        assert not validate_action([0, 3], 2, 2)

    def test_all_permutations_valid(self):
        for perm in itertools.permutations(range(3), 2):
            a = np.zeros(3, dtype=int)
            for ch, dev in enumerate(perm, start=1):
                a[dev] = ch
            assert validate_action(a, 3, 2)


class TestReward:
    def test_all_fresh(self):
        costs = [CostModel.from_table([2.0, 5.0]), CostModel.from_table([3.0, 4.0])]
        s = SystemState(tau=[1, 1], H=[[1], [1]])
        assert reward(s, costs) == -5.0

    def test_single_device_tau2(self):
        costs = [CostModel.from_table([1.0, 5.0])]
        s = SystemState(tau=[2], H=[[1]])
        assert reward(s, costs) == -5.0

    def test_two_device_sum(self):
        costs = [
            CostModel.from_table([1.0, 2.0, 4.2]),
            CostModel.from_table([1.1, 9.9, 9.9]),
        ]
        s = SystemState(tau=[3, 1], H=[[1], [1]])
        assert reward(s, costs) == pytest.approx(-5.3)


class TestStep:
    def test_zero_drop_delivers(self):
        model = flat_model(2, 1, 2, 0.0)
        costs = linear_costs(2, 6)
        s = SystemState(tau=[4, 2], H=[[1], [2]])
        out = step(s, [1, 0], model, costs, np.random.default_rng(0), tau_max=6)
        assert out.next_state.tau[0] == 1
        assert out.delivered[0] and not out.delivered[1]

    def test_unscheduled_always_grows(self):
        model = flat_model(2, 1, 2, 0.0)
        costs = linear_costs(2, 6)
        s = SystemState(tau=[1, 3], H=[[1], [1]])
        for seed in range(10):
            out = step(s, [1, 0], model, costs, np.random.default_rng(seed), tau_max=6)
            assert out.next_state.tau[1] == 4

    def test_age_caps(self):
        model = flat_model(2, 1, 2, 1.0)
        costs = linear_costs(2, 4)
        s = SystemState(tau=[4, 4], H=[[1], [1]])
        out = step(s, [1, 0], model, costs, np.random.default_rng(1), tau_max=4)
        assert np.all(out.next_state.tau == 4)

    def test_reward_is_pre_transition(self):
        model = flat_model(1, 1, 2, 1.0)  # always drops: age grows, reward stays r(s_t)
        costs = linear_costs(1, 6)
        s = SystemState(tau=[3], H=[[1]])
        out = step(s, [1], model, costs, np.random.default_rng(0), tau_max=6)
        assert out.reward == -3.0
        assert out.next_state.tau[0] == 4

    def test_infeasible_action_raises(self):
        model = flat_model(2, 1, 2, 0.0)
        costs = linear_costs(2, 6)
        s = SystemState(tau=[1, 1], H=[[1], [1]])
        with pytest.raises(ValueError):
            step(s, [1, 1], model, costs, np.random.default_rng(0), tau_max=6)

    def test_empirical_success_rate(self):
        model = flat_model(1, 1, 1, 0.2)
        costs = linear_costs(1, 6)
        s = SystemState(tau=[1], H=[[1]])
        rng = np.random.default_rng(3)
        n = 100_000
        hits = sum(
            step(s, [1], model, costs, rng, tau_max=6).delivered[0] for _ in range(n)
        )
        sigma = np.sqrt(0.8 * 0.2 / n)
        assert abs(hits / n - 0.8) < 3 * sigma


class TestTransitionProb:
    def test_unscheduled_wrong_age_is_zero(self):
        model = flat_model(2, 1, 2, 0.3)
        s = SystemState(tau=[1, 1], H=[[1], [1]])
        s_next = SystemState(tau=[2, 1], H=[[1], [1]])  # device 1 idle must grow to 2
        assert transition_prob(s, [1, 0], s_next, model, tau_max=6) == 0.0

    def test_success_factor(self):
        model = flat_model(1, 1, 1, 0.3)
        s = SystemState(tau=[5], H=[[1]])
        nxt = SystemState(tau=[1], H=[[1]])
        assert transition_prob(s, [1], nxt, model, tau_max=6) == pytest.approx(0.7)

    def test_sums_to_one_exhaustive(self):
        rng = np.random.default_rng(0)
        q = np.stack(
            [rng.dirichlet(np.ones(2)) for _ in range(2)], axis=0
        ).reshape(2, 1, 2)
        p = np.sort(rng.uniform(0, 1, size=(2, 1, 2)), axis=2)
        model = ChannelModel(2, 1, 2, level_probs=q, drop_probs=p)
        tau_max = 4
        for tau in itertools.product(range(1, tau_max + 1), repeat=2):
            for h in itertools.product([1, 2], repeat=2):
                s = SystemState(tau=list(tau), H=np.array(h).reshape(2, 1))
                for a in ([1, 0], [0, 1]):
                    total = 0.0
                    for tau_n in itertools.product(range(1, tau_max + 1), repeat=2):
                        for h_n in itertools.product([1, 2], repeat=2):
                            s_n = SystemState(
                                tau=list(tau_n), H=np.array(h_n).reshape(2, 1)
                            )
                            total += transition_prob(s, a, s_n, model, tau_max)
                    assert total == pytest.approx(1.0, abs=1e-12)

    def test_matches_empirical_frequencies(self):
        model = flat_model(2, 1, 2, [0.1, 0.4])
        costs = linear_costs(2, 3)
        s = SystemState(tau=[2, 1], H=[[2], [1]])
        a = [1, 0]
        rng = np.random.default_rng(7)
        n = 50_000
        counts: dict[tuple, int] = {}
        for _ in range(n):
            out = step(s, a, model, costs, rng, tau_max=3)
            key = (tuple(out.next_state.tau), tuple(out.next_state.H.ravel()))
            counts[key] = counts.get(key, 0) + 1
        for key, cnt in counts.items():
            s_n = SystemState(tau=list(key[0]), H=np.array(key[1]).reshape(2, 1))
            prob = transition_prob(s, a, s_n, model, tau_max=3)
            sigma = np.sqrt(prob * (1 - prob) / n)
            assert abs(cnt / n - prob) < 4 * sigma + 1e-12


class TestResetAndEncode:
    def test_reset_all_fresh(self):
        model = flat_model(3, 1, 2, 0.1)
        s = reset(model, linear_costs(3, 6), np.random.default_rng(0))
        assert np.all(s.tau == 1)

    def test_reset_reproducible(self):
        model = flat_model(3, 1, 2, 0.1)
        a = reset(model, linear_costs(3, 6), np.random.default_rng(4))
        b = reset(model, linear_costs(3, 6), np.random.default_rng(4))
        np.testing.assert_array_equal(a.H, b.H)

    def test_encode_minimal(self):
        s = SystemState(tau=[1], H=[[2]])
        np.testing.assert_allclose(encode_state(s, tau_max=6, levels=2), [1 / 6, 1.0])

    def test_encode_length(self):
        s = SystemState(tau=np.ones(6, dtype=int), H=np.ones((6, 3), dtype=int))
        assert encode_state(s, 30, 5).shape == (24,)

    def test_encode_monotone(self):
        s = SystemState(tau=[2, 3], H=[[1], [2]])
        s_up = SystemState(tau=[2, 4], H=[[2], [2]])
        assert np.all(encode_state(s_up, 6, 2) >= encode_state(s, 6, 2))

    def test_encode_extrapolates_past_cap(self):
        s = SystemState(tau=[7], H=[[1]])
        assert encode_state(s, tau_max=6, levels=2)[0] > 1.0


class TestSchedulingEnv:
    def test_wraps_functions(self):
        model = flat_model(2, 1, 2, 0.1)
        env = SchedulingEnv(model, linear_costs(2, 6), tau_max=6)
        rng = np.random.default_rng(0)
        s = env.reset(rng)
        out = env.step(s, [1, 0], rng)
        assert out.reward == env.reward(s)
        assert env.encode(s).shape == (env.state_dim,)

    def test_requires_fewer_channels_than_devices(self):
        model = flat_model(2, 2, 2, 0.1)
        with pytest.raises(ValueError):
            SchedulingEnv(model, linear_costs(2, 6), tau_max=6)

    def test_reward_nonincreasing_in_age(self):
        model = flat_model(2, 1, 2, 0.1)
        env = SchedulingEnv(model, linear_costs(2, 6), tau_max=6)
        s = SystemState(tau=[2, 2], H=[[1], [1]])
        s_up = SystemState(tau=[2, 3], H=[[1], [1]])
        assert env.reward(s_up) <= env.reward(s) <= 0
