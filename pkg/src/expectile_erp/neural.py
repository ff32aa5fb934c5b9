"""Small dense networks with hand-written backpropagation.

All computations are batched: inputs have shape (n, d). Gradients of a
batch are the sums of per-sample gradients weighted by ``upstream``.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_FORMAT = "expectile_erp.network"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


@dataclass
class GradientRecord:
    params: list            # arrays congruent with ``net.params``
    inputs: np.ndarray      # d(sum upstream * output) / d input, shape (n, d)


def _init_layer(rng, n_in, n_out):
    bound = 1.0 / np.sqrt(n_in)
    W = rng.uniform(-bound, bound, size=(n_out, n_in))
    b = rng.uniform(-bound, bound, size=n_out)
    return W, b


class FeedforwardNet:
    """Dense layers with tanh activations (the last layer optionally linear)."""

    def __init__(self, widths, tanh_output=True, seed=0, rng=None, input_scale=None):
        if len(widths) < 2:
            raise ShapeError("need at least an input and an output width")
        rng = rng if rng is not None else np.random.Generator(np.random.Philox(seed))
        self.widths = list(widths)
        self.tanh_output = bool(tanh_output)
        # fixed, non-trainable per-feature multiplier applied to the input
        self.input_scale = (np.ones(widths[0]) if input_scale is None
                            else np.asarray(input_scale, dtype=float).copy())
        if self.input_scale.shape != (widths[0],):
            raise ShapeError("input_scale must match the input width")
        self.params = []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            W, b = _init_layer(rng, n_in, n_out)
            self.params += [W, b]

    @property
    def n_layers(self):
        return len(self.params) // 2

    @property
    def in_dim(self):
        return self.widths[0]

    @property
    def out_dim(self):
        return self.widths[-1]

    def _active(self, k):
        return k < self.n_layers - 1 or self.tanh_output

    def _forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.shape[1] != self.in_dim:
            raise ShapeError(f"input width {X.shape[1]} != {self.in_dim}")
        acts = [X * self.input_scale]
        h = acts[0]
        for k in range(self.n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            h = h @ W.T + b
            if self._active(k):
                h = np.tanh(h)
            acts.append(h)
        return acts, single

    def forward(self, x):
        acts, single = self._forward(x)
        return acts[-1][0] if single else acts[-1]

    __call__ = forward

    def backward(self, x, upstream):
        acts, single = self._forward(x)
        n = acts[0].shape[0]
        g = np.asarray(upstream, dtype=float)
        g = np.broadcast_to(g.reshape(n, -1) if g.ndim else g, (n, self.out_dim))
        grads = [None] * len(self.params)
        for k in reversed(range(self.n_layers)):
            if self._active(k):
                g = g * (1.0 - acts[k + 1] ** 2)
            W = self.params[2 * k]
            grads[2 * k] = g.T @ acts[k]
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ W
        g = g * self.input_scale
        return GradientRecord(grads, g[0] if single else g)

    def grad_wrt_input(self, x, upstream=1.0):
        return self.backward(x, upstream).inputs

    def copy(self):
        return copy.deepcopy(self)

    # checkpointing -----------------------------------------------------
    def to_dict(self):
        return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "kind": "feedforward", "widths": self.widths,
                "tanh_output": self.tanh_output,
                "input_scale": self.input_scale.tolist(),
                "params": [p.ravel().tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, d):
        _check_header(d, "feedforward")
        net = cls(d["widths"], d["tanh_output"], input_scale=d.get("input_scale"))
        _load_params(net, d["params"])
        return net


class CriticNet:
    """Q(s, a): a state trunk whose output is concatenated with the action
    and passed through a head ending in a linear scalar unit."""

    def __init__(self, state_dim, action_dim, hidden=32, seed=0, rng=None, input_scale=None):
        rng = rng if rng is not None else np.random.Generator(np.random.Philox(seed))
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hidden = hidden
        self.trunk = FeedforwardNet([state_dim, hidden, hidden, hidden], rng=rng,
                                    input_scale=input_scale)
        self.head = FeedforwardNet([hidden + action_dim, hidden, hidden, 1],
                                   tanh_output=False, rng=rng)

    @property
    def params(self):
        return self.trunk.params + self.head.params

    @property
    def in_dim(self):
        return self.state_dim + self.action_dim

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"input width {x.shape[-1]} != {self.in_dim}")
        return x[..., :self.state_dim], x[..., self.state_dim:]

    def forward(self, states, actions=None):
        """Q values; pass either (states, actions) or one concatenated input."""
        if actions is None:
            states, actions = self._split(states)
        s = np.asarray(states, dtype=float)
        a = np.asarray(actions, dtype=float)
        single = s.ndim == 1
        s2, a2 = np.atleast_2d(s), np.atleast_2d(a)
        if a2.shape[1] != self.action_dim:
            raise ShapeError(f"action width {a2.shape[1]} != {self.action_dim}")
        h = self.trunk.forward(s2)
        q = self.head.forward(np.hstack([h, a2]))[:, 0]
        return q[0] if single else q

    __call__ = forward

    def backward(self, states, actions=None, upstream=1.0):
        if actions is None:
            states, actions = self._split(states)
        s2 = np.atleast_2d(np.asarray(states, dtype=float))
        a2 = np.atleast_2d(np.asarray(actions, dtype=float))
        single = np.ndim(states) == 1
        n = s2.shape[0]
        h = self.trunk.forward(s2)
        up = np.broadcast_to(np.asarray(upstream, dtype=float).reshape(-1, 1)
                             if np.ndim(upstream) else upstream, (n, 1))
        head_rec = self.head.backward(np.hstack([h, a2]), up)
        dh = head_rec.inputs[:, :self.hidden]
        da = head_rec.inputs[:, self.hidden:]
        trunk_rec = self.trunk.backward(s2, dh)
        dx = np.hstack([trunk_rec.inputs, da])
        return GradientRecord(trunk_rec.params + head_rec.params, dx[0] if single else dx)

    def grad_wrt_action(self, states, actions, upstream=1.0):
        """dQ/da; the action slice of the input gradient."""
        rec = self.backward(states, actions, upstream)
        return rec.inputs[..., self.state_dim:]

    grad_wrt_input = grad_wrt_action

    def copy(self):
        return copy.deepcopy(self)

    def to_dict(self):
        return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "kind": "critic", "state_dim": self.state_dim,
                "action_dim": self.action_dim, "hidden": self.hidden,
                "input_scale": self.trunk.input_scale.tolist(),
                "params": [p.ravel().tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, d):
        _check_header(d, "critic")
        net = cls(d["state_dim"], d["action_dim"], d["hidden"],
                  input_scale=d.get("input_scale"))
        _load_params(net, d["params"])
        return net


def _check_header(d, kind):
    if d.get("format") != CHECKPOINT_FORMAT or d.get("kind") != kind:
        raise ValueError(f"not a {kind} checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")


def _load_params(net, flat):
    if len(flat) != len(net.params):
        raise ShapeError("checkpoint layout does not match the network")
    for p, vals in zip(net.params, flat):
        arr = np.asarray(vals, dtype=float)
        if arr.size != p.size:
            raise ShapeError("checkpoint layout does not match the network")
        p[...] = arr.reshape(p.shape)


def save_checkpoint(net, path):
    with open(path, "w") as f:
        json.dump(net.to_dict(), f)


def load_checkpoint(path):
    with open(path) as f:
        d = json.load(f)
    return {"feedforward": FeedforwardNet, "critic": CriticNet}[d["kind"]].from_dict(d)


def soft_update(target, main, alpha_tgt):
    """target <- alpha * main + (1 - alpha) * target, in place."""
    if not 0.0 <= alpha_tgt <= 1.0:
        raise ValueError("alpha_tgt must lie in [0, 1]")
    if len(target.params) != len(main.params) or any(
            t.shape != m.shape for t, m in zip(target.params, main.params)):
        raise ShapeError("target and main layouts differ")
    for t, m in zip(target.params, main.params):
        if alpha_tgt == 1.0:
            t[...] = m
        elif alpha_tgt > 0.0:
            t *= 1.0 - alpha_tgt
            t += alpha_tgt * m
    return target


class Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.k = 0

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.k += 1
        c1 = 1 - self.beta1 ** self.k
        c2 = 1 - self.beta2 ** self.k
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name, lr):
    if name == "sgd":
        return Sgd(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}")
