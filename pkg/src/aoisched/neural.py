"""From-scratch fully connected networks with manual forward/backward.

Everything trains with plain numpy: batched affine+activation stacks, exact
reverse-mode gradients for parameters *and* inputs, Adam with bias
correction, polyak target updates, and a two-path critic whose state path
carries sign-constrained weights (input-to-hidden >= 0, hidden-to-output
<= 0 with a monotone activation), making the output architecturally
non-increasing in every state coordinate.

Derivative-penalty training additionally needs d/d(params) of the critic's
input gradient; `mixed_backward` computes that with a tangent-augmented
forward/backward sweep (forward-over-reverse), so no autodiff framework is
required.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")


def _sigmoid(z):
    # tanh form: overflow-free and monotone in floating point
    out = np.tanh(0.5 * z)
    out += 1.0
    out *= 0.5
    return out


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_d(name, z):
    if name == "relu":
        return z > 0  # bool; promotes to 0/1 under multiplication
    if name == "sigmoid":
        s = _sigmoid(z)
        return s * (1.0 - s)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


def _act_dd(name, z):
    if name == "relu":
        return np.zeros_like(z)
    if name == "sigmoid":
        s = _sigmoid(z)
        return s * (1.0 - s) * (1.0 - 2.0 * s)
    if name == "tanh":
        t = np.tanh(z)
        return -2.0 * t * (1.0 - t * t)
    if name == "identity":
        return np.zeros_like(z)
    raise ValueError(f"unknown activation {name!r}")


def _alloc_flat(shapes):
    """One contiguous parameter buffer plus reshaped views per array.

    Keeping every parameter a view into a single vector makes the optimizer
    and target updates single-array operations."""
    total = sum(int(np.prod(s)) for s in shapes)
    flat = np.zeros(total)
    views = []
    off = 0
    for s in shapes:
        n = int(np.prod(s))
        views.append(flat[off : off + n].reshape(s))
        off += n
    return flat, views


def _uniform_fill(rng, view, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    view[...] = rng.uniform(-bound, bound, size=view.shape)


def flatten_grads(grads) -> np.ndarray:
    return np.concatenate([np.ravel(g) for g in grads])


def _as_batch(x, dim, what):
    x = np.asarray(x, dtype=float)
    squeezed = x.ndim == 1
    if squeezed:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"{what} must have {dim} columns, got shape {x.shape}")
    return x, squeezed


class Mlp:
    """Fully connected stack; hidden layers share one activation."""

    def __init__(
        self,
        layer_dims,
        hidden_activation="relu",
        output_activation="identity",
        rng=None,
        final_init_scale=None,
    ):
        if len(layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        for name in (hidden_activation, output_activation):
            if name not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.layer_dims = list(layer_dims)
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.final_init_scale = final_init_scale
        shapes = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            shapes.append((fan_in, fan_out))
            shapes.append((fan_out,))
        self._flat, views = _alloc_flat(shapes)
        self.weights = views[0::2]
        self.biases = views[1::2]
        last = len(self.weights) - 1
        for l, (fan_in, w, b) in enumerate(
            zip(layer_dims[:-1], self.weights, self.biases)
        ):
            if l == last and final_init_scale is not None:
                # small symmetric output layer keeps a squashing output
                # activation near its midpoint at the start of training
                w[...] = rng.uniform(-final_init_scale, final_init_scale, w.shape)
                b[...] = rng.uniform(-final_init_scale, final_init_scale, b.shape)
            else:
                _uniform_fill(rng, w, fan_in)
                _uniform_fill(rng, b, fan_in)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    def _activation(self, layer):
        last = len(self.weights) - 1
        return self.output_activation if layer == last else self.hidden_activation

    def forward(self, x):
        """Returns (y, cache); x may be a single vector or a (B, d) batch."""
        x, squeezed = _as_batch(x, self.input_dim, "input")
        xs = [x]
        zs = []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = xs[-1] @ w
            z += b
            zs.append(z)
            name = self._activation(l)
            xs.append(z if name == "identity" else _act(name, z))
        y = xs[-1][0] if squeezed else xs[-1]
        return y, (xs, zs, squeezed)

    def backward(self, cache, grad_y, need_param_grads: bool = True):
        """Exact reverse-mode pass.

        grad_y is dL/dy per sample (same leading shape as the forward
        output).  Returns (param_grads, input_grad): parameter gradients are
        summed over the batch, the input gradient is per sample.
        need_param_grads=False skips the parameter products (input-gradient
        consumers such as the policy-gradient chain).
        """
        xs, zs, squeezed = cache
        a = np.asarray(grad_y, dtype=float)
        if squeezed:
            a = a[None, ...]
        if a.shape != xs[-1].shape:
            raise ValueError(f"grad_y shape {a.shape} != output shape {xs[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for l in range(len(self.weights) - 1, -1, -1):
            name = self._activation(l)
            az = a if name == "identity" else a * _act_d(name, zs[l])
            if need_param_grads:
                grads[2 * l] = xs[l].T @ az
                grads[2 * l + 1] = az.sum(axis=0)
            a = az @ self.weights[l].T
        if squeezed:
            a = a[0]
        return grads, a

    def mixed_backward(self, x, v, weight):
        """Gradient w.r.t. parameters of sum_b weight_b * v_b . grad_x(y_b).

        Scalar-output networks only.  Runs the forward pass carrying the
        input tangent v, then the backward pass carrying the tangent of every
        adjoint; the tangents of the parameter gradients are exactly
        d/d(params) of the directional input derivative.
        """
        if self.output_dim != 1:
            raise ValueError("mixed_backward requires a scalar output")
        x, _ = _as_batch(x, self.input_dim, "input")
        v, _ = _as_batch(v, self.input_dim, "tangent")
        weight = np.asarray(weight, dtype=float).reshape(-1, 1)
        if weight.shape[0] != x.shape[0]:
            raise ValueError("one weight per batch row required")

        xs, zs = [x], []
        ts, tzs = [v], []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = xs[-1] @ w + b
            tz = ts[-1] @ w
            zs.append(z)
            tzs.append(tz)
            xs.append(_act(self._activation(l), z))
            ts.append(_act_d(self._activation(l), z) * tz)

        a = np.broadcast_to(weight, zs[-1].shape).copy()
        ta = np.zeros_like(a)
        grads = [None] * (2 * len(self.weights))
        for l in range(len(self.weights) - 1, -1, -1):
            name = self._activation(l)
            d1 = _act_d(name, zs[l])
            az = a * d1
            taz = ta * d1 + a * _act_dd(name, zs[l]) * tzs[l]
            grads[2 * l] = ts[l].T @ az + xs[l].T @ taz
            grads[2 * l + 1] = taz.sum(axis=0)
            a = az @ self.weights[l].T
            ta = taz @ self.weights[l].T
        return grads

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def flat_params(self) -> np.ndarray:
        """The contiguous buffer behind params(); mutating it mutates them."""
        return self._flat

    def load_params(self, arrays):
        current = self.params()
        if len(arrays) != len(current):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(current, arrays):
            if dst.shape != np.shape(src):
                raise ValueError("parameter shape mismatch")
            dst[...] = src

    def copy(self):
        clone = Mlp(
            self.layer_dims,
            self.hidden_activation,
            self.output_activation,
            rng=np.random.default_rng(0),
            final_init_scale=self.final_init_scale,
        )
        clone._flat[...] = self._flat
        return clone


class MlpCritic:
    """Plain critic Q(s, a) = Mlp([s, a]); splits input gradients per block."""

    kind = "mlp_critic"

    def __init__(self, state_dim, action_dim, hidden_dims, rng=None):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.net = Mlp(
            [state_dim + action_dim, *hidden_dims, 1],
            hidden_activation="relu",
            output_activation="identity",
            rng=rng,
        )

    def forward(self, s, a):
        s, _ = _as_batch(s, self.state_dim, "state")
        a, _ = _as_batch(a, self.action_dim, "action")
        if s.shape[0] != a.shape[0]:
            raise ValueError("state/action batch sizes differ")
        y, cache = self.net.forward(np.concatenate([s, a], axis=1))
        return y[:, 0], cache

    def backward(self, cache, dq, need_param_grads: bool = True):
        dq = np.asarray(dq, dtype=float).reshape(-1, 1)
        grads, dx = self.net.backward(cache, dq, need_param_grads)
        return grads, (dx[:, : self.state_dim], dx[:, self.state_dim :])

    def state_grad(self, s, a):
        """dQ/ds per sample (one backward pass with unit seeds)."""
        q, cache = self.forward(s, a)
        _, (ds, _) = self.backward(cache, np.ones_like(q), need_param_grads=False)
        return q, ds

    def mixed_backward(self, s, a, v_state, weight):
        s, _ = _as_batch(s, self.state_dim, "state")
        a, _ = _as_batch(a, self.action_dim, "action")
        v_state, _ = _as_batch(v_state, self.state_dim, "tangent")
        v = np.concatenate([v_state, np.zeros_like(a)], axis=1)
        return self.net.mixed_backward(np.concatenate([s, a], axis=1), v, weight)

    def params(self):
        return self.net.params()

    def flat_params(self) -> np.ndarray:
        return self.net.flat_params()

    def load_params(self, arrays):
        self.net.load_params(arrays)

    def copy(self):
        clone = MlpCritic(self.state_dim, self.action_dim, [], rng=None)
        clone.net = self.net.copy()
        return clone


class MonotoneCritic:
    """Two-path critic: constrained state path plus free action path.

    State path: one sigmoid hidden layer of width U; input-to-hidden weights
    are kept >= 0 and hidden-to-output weights <= 0, so for any fixed action
    the output is non-increasing in every state coordinate.  The action path
    is an unconstrained relu hidden layer.  Both paths feed one shared
    output bias.  Call project() after every optimizer step.
    """

    kind = "monotone_critic"

    def __init__(self, state_dim, action_dim, state_hidden=64, action_hidden=64, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.state_hidden = state_hidden
        self.action_hidden = action_hidden
        shapes = [
            (state_dim, state_hidden),
            (state_hidden,),
            (state_hidden, 1),
            (action_dim, action_hidden),
            (action_hidden,),
            (action_hidden, 1),
            (1,),
        ]
        self._flat, views = _alloc_flat(shapes)
        (self.w_s1, self.b_s1, self.w_s2, self.w_a1, self.b_a1, self.w_a2,
         self.b_out) = views
        _uniform_fill(rng, self.w_s1, state_dim)
        _uniform_fill(rng, self.b_s1, state_dim)
        _uniform_fill(rng, self.w_s2, state_hidden)
        _uniform_fill(rng, self.w_a1, action_dim)
        _uniform_fill(rng, self.b_a1, action_dim)
        _uniform_fill(rng, self.w_a2, action_hidden)
        self.b_out[...] = 0.0
        self.project()

    def project(self):
        """Clamp the state-path weight signs (idempotent)."""
        np.maximum(self.w_s1, 0.0, out=self.w_s1)
        np.minimum(self.w_s2, 0.0, out=self.w_s2)

    def forward(self, s, a):
        s, _ = _as_batch(s, self.state_dim, "state")
        a, _ = _as_batch(a, self.action_dim, "action")
        if s.shape[0] != a.shape[0]:
            raise ValueError("state/action batch sizes differ")
        zs = s @ self.w_s1 + self.b_s1
        hs = _sigmoid(zs)
        za = a @ self.w_a1 + self.b_a1
        ha = np.maximum(za, 0.0)
        q = hs @ self.w_s2 + ha @ self.w_a2 + self.b_out
        return q[:, 0], (s, a, zs, hs, za, ha)

    def backward(self, cache, dq, need_param_grads: bool = True):
        s, a, zs, hs, za, ha = cache
        d = np.asarray(dq, dtype=float).reshape(-1, 1)
        dzs = (d @ self.w_s2.T) * hs * (1.0 - hs)
        dza = (d @ self.w_a2.T) * (za > 0)
        grads = None
        if need_param_grads:
            grads = [
                s.T @ dzs,
                dzs.sum(axis=0),
                hs.T @ d,
                a.T @ dza,
                dza.sum(axis=0),
                ha.T @ d,
                d.sum(axis=0),
            ]
        return grads, (dzs @ self.w_s1.T, dza @ self.w_a1.T)

    def state_grad(self, s, a):
        q, cache = self.forward(s, a)
        _, (ds, _) = self.backward(cache, np.ones_like(q), need_param_grads=False)
        return q, ds

    def mixed_backward(self, s, a, v_state, weight):
        """d/d(params) of sum_b weight_b * v_b . dQ/ds_b.

        The action path carries no tangent, so only state-path parameters
        pick up nonzero entries; zeros are returned for the rest to keep the
        canonical parameter order.
        """
        s, _ = _as_batch(s, self.state_dim, "state")
        v, _ = _as_batch(v_state, self.state_dim, "tangent")
        a, _ = _as_batch(a, self.action_dim, "action")
        w = np.asarray(weight, dtype=float).reshape(-1, 1)
        zs = s @ self.w_s1 + self.b_s1
        hs = _sigmoid(zs)
        d1 = hs * (1.0 - hs)
        d2 = d1 * (1.0 - 2.0 * hs)
        tz = v @ self.w_s1
        th = d1 * tz
        dzs = (w @ self.w_s2.T) * d1
        t_dzs = (w @ self.w_s2.T) * d2 * tz
        g_ws1 = v.T @ dzs + s.T @ t_dzs
        g_bs1 = t_dzs.sum(axis=0)
        g_ws2 = th.T @ w
        return [
            g_ws1,
            g_bs1,
            g_ws2,
            np.zeros_like(self.w_a1),
            np.zeros_like(self.b_a1),
            np.zeros_like(self.w_a2),
            np.zeros_like(self.b_out),
        ]

    def params(self):
        return [
            self.w_s1,
            self.b_s1,
            self.w_s2,
            self.w_a1,
            self.b_a1,
            self.w_a2,
            self.b_out,
        ]

    def flat_params(self) -> np.ndarray:
        return self._flat

    def load_params(self, arrays):
        current = self.params()
        if len(arrays) != len(current):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(current, arrays):
            if dst.shape != np.shape(src):
                raise ValueError("parameter shape mismatch")
            dst[...] = src

    def copy(self):
        clone = MonotoneCritic(
            self.state_dim, self.action_dim, self.state_hidden, self.action_hidden
        )
        clone._flat[...] = self._flat
        return clone


def monotone_project(critic: MonotoneCritic) -> MonotoneCritic:
    critic.project()
    return critic


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kw,
        )


def adam_step(params, grads, state: AdamState, lr: float):
    """Standard Adam with bias correction; updates params in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    # p -= lr*(m/c1)/(sqrt(v/c2)+eps) rearranged to cut temporaries
    k = c1 / np.sqrt(c2)
    offset = c1 * state.eps
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        denom = np.sqrt(v)
        denom *= k
        denom += offset
        np.divide(m, denom, out=denom)
        denom *= lr
        p -= denom
    return params


def soft_update(target_params, online_params, delta: float):
    """target <- delta * online + (1 - delta) * target, in place."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    for t, o in zip(target_params, online_params):
        t *= 1.0 - delta
        t += delta * o
    return target_params


def all_finite(params) -> bool:
    return all(np.isfinite(p).all() for p in params)


# ---- checkpoint io (plain text: json header + nested parameter lists) ----

def _describe(net) -> dict:
    if isinstance(net, Mlp):
        return {
            "kind": "mlp",
            "layer_dims": net.layer_dims,
            "hidden_activation": net.hidden_activation,
            "output_activation": net.output_activation,
        }
    if isinstance(net, MlpCritic):
        return {
            "kind": net.kind,
            "state_dim": net.state_dim,
            "action_dim": net.action_dim,
            "layer_dims": net.net.layer_dims,
        }
    if isinstance(net, MonotoneCritic):
        return {
            "kind": net.kind,
            "state_dim": net.state_dim,
            "action_dim": net.action_dim,
            "state_hidden": net.state_hidden,
            "action_hidden": net.action_hidden,
        }
    raise TypeError(f"cannot checkpoint {type(net)!r}")


def save_checkpoint(path, net):
    doc = _describe(net)
    doc["params"] = [p.tolist() for p in net.params()]
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc["kind"]
    if kind == "mlp":
        net = Mlp(
            doc["layer_dims"],
            doc["hidden_activation"],
            doc["output_activation"],
        )
    elif kind == "mlp_critic":
        dims = doc["layer_dims"]
        net = MlpCritic(doc["state_dim"], doc["action_dim"], dims[1:-1])
    elif kind == "monotone_critic":
        net = MonotoneCritic(
            doc["state_dim"],
            doc["action_dim"],
            doc["state_hidden"],
            doc["action_hidden"],
        )
    else:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    net.load_params([np.array(p, dtype=float) for p in doc["params"]])
    return net
