"""Static expectile and CVaR risk measures on discrete distributions.

Convention: inputs are *liabilities* (larger is worse). The tau-expectile
is the root q of

    tau * E[(X - q)+] = (1 - tau) * E[(q - X)+],

so tau = 1/2 gives the mean and tau -> 1 tends to the worst case.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def _check_dist(samples, probs):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample list")
    if probs is None:
        p = np.full(x.size, 1.0 / x.size)
    else:
        p = np.asarray(probs, dtype=float).ravel()
        if p.shape != x.shape:
            raise ValueError("samples and probs differ in length")
        if np.any(p <= 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
            raise ValueError("probs must be positive and sum to 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    return x, p


def _check_tau(tau):
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")


def expectile_foc(q, samples, probs, tau):
    """tau E[(X-q)+] - (1-tau) E[(q-X)+]; strictly decreasing in q."""
    x = np.asarray(samples, dtype=float)
    p = np.asarray(probs, dtype=float)
    return tau * (p @ np.maximum(x - q, 0.0)) - (1 - tau) * (p @ np.maximum(q - x, 0.0))


def expectile(samples, probs=None, tau=0.5, tol=1e-10, max_iter=200):
    """tau-expectile by bisection on the first-order condition."""
    _check_tau(tau)
    x, p = _check_dist(samples, probs)
    lo, hi = x.min(), x.max()
    if lo == hi:
        return float(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if expectile_foc(mid, x, p, tau) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    mid = 0.5 * (lo + hi)
    # the condition is linear in q between atoms: solve it exactly on the
    # segment that contains the bisection estimate
    w = np.where(x > mid, tau, 1 - tau) * p
    q = float(w @ x / w.sum())
    return q if abs(q - mid) <= 2 * tol else float(mid)


def expectile_objective(q, samples, probs, tau):
    """Asymmetric squared score whose minimizer over q is the expectile."""
    x = np.asarray(samples, dtype=float)
    p = np.asarray(probs, dtype=float)
    return tau * (p @ np.maximum(x - q, 0.0) ** 2) + (1 - tau) * (p @ np.maximum(q - x, 0.0) ** 2)


def expectile_score(y, tau):
    """Expectile score and its (half-)subgradient at residual ``y``.

    ``y`` is measured as liability minus estimate, so positive residuals
    (estimate too low) carry weight ``tau``. The subgradient omits the
    factor 2 of the exact derivative of the loss.
    """
    y = np.asarray(y, dtype=float)
    loss = np.where(y > 0, tau, 1 - tau) * y * y
    sub = tau * np.maximum(0.0, y) - (1 - tau) * np.maximum(0.0, -y)
    if loss.ndim == 0:
        return float(loss), float(sub)
    return loss, sub


def expectile_weights(samples, q, tau):
    """Per-sample weights w_i with dq/dX_i proportional to p_i w_i."""
    x = np.asarray(samples, dtype=float)
    return np.where(x > q, tau, 1 - tau)


def expectile_sorted_rows(values, tau):
    """Exact expectile of each row of ``values`` under equal weights.

    Vectorized for dynamic programming: the first-order condition is
    piecewise linear in q, so after sorting each row the root is found in
    closed form on the correct segment.
    """
    v = np.sort(np.asarray(values, dtype=float), axis=-1)
    k = v.shape[-1]
    csum = np.cumsum(v, axis=-1)
    total = csum[..., -1:]
    # j = number of atoms at or below q
    j = np.arange(1, k + 1)
    low_sum = csum
    high_sum = total - csum
    num = tau * high_sum + (1 - tau) * low_sum
    den = tau * (k - j) + (1 - tau) * j
    q = num / den
    upper = np.concatenate([v[..., 1:], np.full(v.shape[:-1] + (1,), np.inf)], axis=-1)
    ok = (q >= v - 1e-12 * (1 + np.abs(v))) & (q <= upper + 1e-12 * (1 + np.abs(upper)))
    idx = np.argmax(ok, axis=-1)
    return np.take_along_axis(q, idx[..., None], axis=-1)[..., 0]


def cvar(samples, probs=None, alpha=0.0):
    """CVaR_alpha = min_c c + E[(X - c)+] / (1 - alpha), minimized over atoms."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    x, p = _check_dist(samples, probs)
    c = np.unique(x)
    obj = c + (np.maximum(x[None, :] - c[:, None], 0.0) @ p) / (1 - alpha)
    return float(obj.min())


@dataclass
class ScenarioTree:
    """Finite scenario tree; a leaf carries ``value``, a node ``children``.

    ``p`` is the probability of reaching this node from its parent.
    """
    p: float = 1.0
    value: float | None = None
    children: list["ScenarioTree"] = field(default_factory=list)

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("tree probabilities must be positive")
        if self.children:
            if self.value is not None:
                raise ValueError("internal nodes carry no value")
            total = sum(c.p for c in self.children)
            if not np.isclose(total, 1.0, atol=1e-9):
                raise ValueError(f"child probabilities sum to {total}, not 1")
        elif self.value is None:
            raise ValueError("leaf without a value")

    @property
    def depth(self):
        return 0 if not self.children else 1 + max(c.depth for c in self.children)

    def to_dict(self):
        if not self.children:
            return {"p": self.p, "value": self.value}
        return {"p": self.p, "children": [c.to_dict() for c in self.children]}

    @classmethod
    def from_dict(cls, d, max_depth=64):
        if max_depth < 0:
            raise ValueError("tree exceeds the depth bound")
        if "children" in d:
            kids = [cls.from_dict(c, max_depth - 1) for c in d["children"]]
            return cls(float(d.get("p", 1.0)), None, kids)
        return cls(float(d.get("p", 1.0)), float(d["value"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def nested_expectile(tree, tau):
    """Fold leaf values bottom-up, taking the conditional expectile at each node."""
    if not tree.children:
        return float(tree.value)
    vals = [nested_expectile(c, tau) for c in tree.children]
    probs = np.array([c.p for c in tree.children])
    return expectile(vals, probs / probs.sum(), tau)
