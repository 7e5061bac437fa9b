import numpy as np
import pytest

from aoisched.neural import (
    AdamState,
    MlpCritic,
    MonotoneCritic,
    Mlp,
    adam_step,
    all_finite,
    load_checkpoint,
    monotone_project,
    save_checkpoint,
    soft_update,
)


def reference_forward(net, x):
    """Independent re-implementation of the same arithmetic (loop + np.dot)."""
    h = np.asarray(x, dtype=float)
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = np.dot(h, w) + b
        name = net.output_activation if l == last else net.hidden_activation
        if name == "relu":
            h = np.where(z > 0, z, 0.0)
        elif name == "sigmoid":
            h = 1.0 / (1.0 + np.exp(-z))
        elif name == "tanh":
            h = np.tanh(z)
        else:
            h = z
    return h


def fd_param_grads(loss_fn, params, step=1e-5):
    """Central finite differences of a scalar loss over every parameter entry."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn()
            flat[i] = orig - step
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def max_rel_err(got, want, floor=1e-8):
    errs = [
        np.max(np.abs(g - w) / np.maximum(np.abs(w), floor))
        for g, w in zip(got, want)
    ]
    return max(errs)


class TestForward:
    def test_zero_net_outputs_zero(self):
        net = Mlp([3, 4, 2], rng=np.random.default_rng(0))
        for p in net.params():
            p[...] = 0.0
        y, _ = net.forward(np.array([1.0, -2.0, 3.0]))
        np.testing.assert_array_equal(y, np.zeros(2))

    def test_identity_linear_layer(self):
        net = Mlp([3, 3], output_activation="identity", rng=np.random.default_rng(0))
        net.weights[0][...] = np.eye(3)
        net.biases[0][...] = 0.0
        x = np.array([0.5, -1.5, 2.0])
        y, _ = net.forward(x)
        np.testing.assert_array_equal(y, x)

    @pytest.mark.parametrize("hidden", ["relu", "sigmoid", "tanh"])
    @pytest.mark.parametrize("out", ["identity", "tanh", "sigmoid"])
    def test_matches_reference_arithmetic(self, hidden, out):
        rng = np.random.default_rng(1)
        net = Mlp([4, 6, 5, 2], hidden, out, rng=rng)
        x = rng.normal(size=(7, 4))
        y, _ = net.forward(x)
        assert np.max(np.abs(y - reference_forward(net, x))) < 1e-12

    def test_dimension_mismatch(self):
        net = Mlp([3, 2], rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            net.forward(np.zeros(4))


class TestBackward:
    def test_linear_chain_rule(self):
        net = Mlp([2, 1], rng=np.random.default_rng(0))
        net.weights[0][...] = np.array([[0.3], [-0.7]])
        net.biases[0][...] = 0.0
        x = np.array([2.0, 5.0])
        y, cache = net.forward(x)
        grads, gx = net.backward(cache, np.array([1.0]))
        np.testing.assert_allclose(grads[0][:, 0], x)
        np.testing.assert_allclose(gx, net.weights[0][:, 0])

    @pytest.mark.parametrize("hidden", ["relu", "sigmoid", "tanh"])
    def test_param_grads_vs_finite_differences(self, hidden):
        rng = np.random.default_rng(2)
        net = Mlp([4, 6, 5, 1], hidden, "identity", rng=rng)
        x = rng.normal(size=(3, 4))
        target = rng.normal(size=(3, 1))

        def loss():
            y, _ = net.forward(x)
            return 0.5 * np.mean((y - target) ** 2)

        y, cache = net.forward(x)
        grads, _ = net.backward(cache, (y - target) / y.shape[0] * 0.5 * 2)
        want = fd_param_grads(loss, net.params())
        assert max_rel_err(grads, want) < 1e-6

    @pytest.mark.parametrize("hidden", ["sigmoid", "tanh"])
    def test_input_grads_vs_finite_differences(self, hidden):
        rng = np.random.default_rng(3)
        net = Mlp([5, 7, 6, 1], hidden, "identity", rng=rng)
        x = rng.normal(size=5)
        _, cache = net.forward(x)
        _, gx = net.backward(cache, np.array([1.0]))
        step = 1e-5
        fd = np.zeros(5)
        for i in range(5):
            e = np.zeros(5)
            e[i] = step
            hi, _ = net.forward(x + e)
            lo, _ = net.forward(x - e)
            fd[i] = (hi[0] - lo[0]) / (2 * step)
        assert np.max(np.abs(gx - fd) / np.maximum(np.abs(fd), 1e-8)) < 1e-6

    def test_dead_relu_region_zero_grad(self):
        net = Mlp([2, 3, 1], "relu", "identity", rng=np.random.default_rng(4))
        net.biases[0][...] = -100.0  # all hidden units dead
        x = np.array([0.1, 0.2])
        _, cache = net.forward(x)
        _, gx = net.backward(cache, np.array([1.0]))
        np.testing.assert_array_equal(gx, np.zeros(2))


class TestMixedBackward:
    @pytest.mark.parametrize("hidden", ["sigmoid", "tanh"])
    def test_matches_finite_differences(self, hidden):
        rng = np.random.default_rng(5)
        net = Mlp([4, 6, 5, 1], hidden, "identity", rng=rng)
        x = rng.normal(size=(3, 4))
        v = rng.normal(size=(3, 4))
        w = rng.normal(size=3)

        def directional():
            total = 0.0
            for b in range(3):
                _, cache = net.forward(x[b])
                _, gx = net.backward(cache, np.array([1.0]))
                total += w[b] * float(v[b] @ gx)
            return total

        got = net.mixed_backward(x, v, w)
        want = fd_param_grads(directional, net.params())
        assert max_rel_err(got, want) < 1e-5

    def test_monotone_critic_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        critic = MonotoneCritic(4, 2, state_hidden=5, action_hidden=3, rng=rng)
        s = rng.normal(size=(3, 4))
        a = rng.normal(size=(3, 2))
        v = rng.normal(size=(3, 4))
        w = rng.normal(size=3)

        def directional():
            _, ds = critic.state_grad(s, a)
            return float(np.sum(w[:, None] * v * ds))

        got = critic.mixed_backward(s, a, v, w)
        want = fd_param_grads(directional, critic.params())
        assert max_rel_err(got, want) < 1e-5


class TestAdam:
    def test_zero_grad_no_move(self):
        p = [np.array([1.0, -2.0])]
        st = AdamState.for_params(p)
        adam_step(p, [np.zeros(2)], st, lr=0.1)
        np.testing.assert_array_equal(p[0], [1.0, -2.0])

    def test_first_step_bounded_by_lr(self):
        p = [np.array([0.0])]
        st = AdamState.for_params(p)
        adam_step(p, [np.array([7.3])], st, lr=0.01)
        assert abs(p[0][0]) <= 0.01 * (1 + 1e-6)

    def test_three_step_scalar_trace(self):
        # independent scalar recomputation of the update recurrences
        grads = [0.5, -1.25, 2.0]
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        x_ref, m, v = 3.0, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x_ref -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        p = [np.array([3.0])]
        st = AdamState.for_params(p)
        for g in grads:
            adam_step(p, [np.array([g])], st, lr=lr)
        assert p[0][0] == pytest.approx(x_ref, abs=1e-12)


class TestSoftUpdate:
    def test_full_copy(self):
        t, o = [np.zeros(3)], [np.arange(3.0)]
        soft_update(t, o, 1.0)
        np.testing.assert_array_equal(t[0], o[0])

    def test_small_delta(self):
        t, o = [np.zeros(1)], [np.ones(1)]
        soft_update(t, o, 0.005)
        assert t[0][0] == pytest.approx(0.005)

    def test_geometric_convergence(self):
        t, o = [np.zeros(1)], [np.ones(1)]
        for _ in range(2000):
            soft_update(t, o, 0.01)
        assert t[0][0] == pytest.approx(1.0, abs=1e-8)


class TestMonotoneCritic:
    def test_projection_clamps(self):
        critic = MonotoneCritic(3, 2, 4, 4, rng=np.random.default_rng(0))
        critic.w_s1[0, 0] = -0.3
        critic.w_s2[1, 0] = 0.7
        monotone_project(critic)
        assert critic.w_s1[0, 0] == 0.0
        assert critic.w_s2[1, 0] == 0.0

    def test_projection_idempotent(self):
        critic = MonotoneCritic(3, 2, 4, 4, rng=np.random.default_rng(1))
        before = [p.copy() for p in critic.params()]
        critic.project()
        for a, b in zip(before, critic.params()):
            np.testing.assert_array_equal(a, b)

    def test_constraint_product_nonpositive(self):
        critic = MonotoneCritic(4, 2, 8, 4, rng=np.random.default_rng(2))
        prod = critic.w_s1[:, :, None] * critic.w_s2[None, :, :]
        assert np.all(prod <= 0)

    def test_monotone_in_every_state_coordinate(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            critic = MonotoneCritic(5, 3, 6, 4, rng=rng)
            for _ in range(20):
                s = rng.uniform(0, 2, size=5)
                a = rng.uniform(0, 1, size=3)
                delta = np.zeros(5)
                delta[rng.integers(5)] = rng.uniform(0.01, 1.0)
                q0, _ = critic.forward(s, a)
                q1, _ = critic.forward(s + delta, a)
                assert q1[0] <= q0[0]

    def test_state_path_output_nonpositive(self):
        critic = MonotoneCritic(4, 2, 8, 4, rng=np.random.default_rng(4))
        critic.w_a1[...] = 0.0
        critic.b_a1[...] = 0.0
        critic.w_a2[...] = 0.0
        critic.b_out[...] = 0.0
        rng = np.random.default_rng(5)
        q, _ = critic.forward(rng.normal(size=(10, 4)), rng.normal(size=(10, 2)))
        assert np.all(q <= 0)

    def test_input_dims_match_table(self):
        # (N, M) = (6, 3): state 24, action 6, total 30 = 2N + N*M
        n, m = 6, 3
        critic = MonotoneCritic(n * (m + 1), n, 16, 16, rng=np.random.default_rng(6))
        assert critic.state_dim + critic.action_dim == 2 * n + n * m

    def test_backward_vs_finite_differences(self):
        rng = np.random.default_rng(7)
        critic = MonotoneCritic(4, 2, 5, 3, rng=rng)
        s = rng.normal(size=(3, 4))
        a = rng.normal(size=(3, 2))
        target = rng.normal(size=3)

        def loss():
            q, _ = critic.forward(s, a)
            return 0.5 * np.mean((q - target) ** 2)

        q, cache = critic.forward(s, a)
        grads, _ = critic.backward(cache, (q - target) / 3.0)
        want = fd_param_grads(loss, critic.params())
        assert max_rel_err(grads, want) < 1e-6


class TestCheckpoints:
    def test_mlp_roundtrip(self, tmp_path):
        net = Mlp([3, 5, 2], "tanh", "sigmoid", rng=np.random.default_rng(0))
        path = tmp_path / "actor.json"
        save_checkpoint(path, net)
        clone = load_checkpoint(path)
        x = np.random.default_rng(1).normal(size=(4, 3))
        ya, _ = net.forward(x)
        yb, _ = clone.forward(x)
        np.testing.assert_array_equal(ya, yb)

    def test_monotone_critic_roundtrip(self, tmp_path):
        critic = MonotoneCritic(4, 2, 6, 3, rng=np.random.default_rng(2))
        path = tmp_path / "critic.json"
        save_checkpoint(path, critic)
        clone = load_checkpoint(path)
        for a, b in zip(critic.params(), clone.params()):
            np.testing.assert_array_equal(a, b)

    def test_mlp_critic_roundtrip(self, tmp_path):
        critic = MlpCritic(4, 2, [8, 8], rng=np.random.default_rng(3))
        path = tmp_path / "critic.json"
        save_checkpoint(path, critic)
        clone = load_checkpoint(path)
        s = np.random.default_rng(4).normal(size=(5, 4))
        a = np.random.default_rng(5).normal(size=(5, 2))
        qa, _ = critic.forward(s, a)
        qb, _ = clone.forward(s, a)
        np.testing.assert_array_equal(qa, qb)


class TestDeterminism:
    def test_identical_training_steps(self):
        def run():
            rng = np.random.default_rng(11)
            net = Mlp([3, 8, 1], rng=rng)
            st = AdamState.for_params(net.params())
            data_rng = np.random.default_rng(12)
            for _ in range(20):
                x = data_rng.normal(size=(16, 3))
                y, cache = net.forward(x)
                grads, _ = net.backward(cache, y / 16.0)
                adam_step(net.params(), grads, st, lr=1e-3)
            return net.params()

        for a, b in zip(run(), run()):
            np.testing.assert_array_equal(a, b)
        assert all_finite(run())
