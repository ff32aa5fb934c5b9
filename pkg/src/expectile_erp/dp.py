"""Discretized dynamic programming for single-asset dynamic expectile hedging.

Backward induction on a log-price grid: at each node the one-period log
return is quantized into K equiprobable atoms, continuation values are
linearly interpolated (and linearly extrapolated past the grid edges), and
the conditional expectile of ``-xi * dS + V_{t+1}`` is minimized over a
grid of share positions followed by golden-section refinement. The
objective is convex in ``xi`` (expectiles are coherent), so refinement
between the neighbours of the best grid action is safe.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .mdp import encode_state, terminal_liability
from .risk import expectile_sorted_rows

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class UnsupportedDimensionError(ValueError):
    pass


def discretize_returns(mu, sigma, K):
    """K equiprobable atoms at the conditional means of Normal(mu, sigma^2) bins."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    probs = np.full(K, 1.0 / K)
    if sigma == 0 or K == 1:
        return np.full(K, float(mu)), probs
    z = norm.ppf(np.arange(K + 1) / K)
    pdf = norm.pdf(z)          # pdf(+-inf) == 0
    atoms = mu + sigma * (pdf[:-1] - pdf[1:]) * K
    return atoms, probs


@dataclass
class DpGrid:
    log_nodes: np.ndarray
    actions: np.ndarray
    K: int
    T: int

    def __post_init__(self):
        self.log_nodes = np.asarray(self.log_nodes, dtype=float)
        self.actions = np.asarray(self.actions, dtype=float)
        for name, g in (("log-price", self.log_nodes), ("action", self.actions)):
            if g.size < 2 or np.any(np.diff(g) <= 0):
                raise ValueError(f"{name} grid must be strictly increasing with >= 2 nodes")
        if self.K < 1 or self.T < 1:
            raise ValueError("need K >= 1 and T >= 1")

    @classmethod
    def default(cls, model, T, n_nodes=401, n_actions=201, K=51, width_sd=6.0):
        """Grid centred on log s0 spanning ``width_sd`` horizon standard deviations."""
        _single(model)
        half = width_sd * model.sigma[0] * np.sqrt(T) + abs(model.mu[0]) * T
        half = max(half, 0.05)
        x0 = np.log(model.s0[0])
        return cls(np.linspace(x0 - half, x0 + half, n_nodes),
                   np.linspace(-1.0, 1.0, n_actions), K, T)


@dataclass
class DpResult:
    log_nodes: np.ndarray
    values: np.ndarray          # (T+1, nx)
    policy: np.ndarray          # (T, nx)

    @property
    def T(self):
        return self.values.shape[0] - 1

    def value(self, t, price):
        return float(interp_extrap(np.log(price), self.log_nodes, self.values[t]))

    def action(self, t, price):
        return float(np.interp(np.log(price), self.log_nodes, self.policy[t]))

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "log_price", "value", "action"])
            for t in range(self.T + 1):
                for i, x in enumerate(self.log_nodes):
                    a = repr(float(self.policy[t, i])) if t < self.T else ""
                    w.writerow([t, repr(float(x)), repr(float(self.values[t, i])), a])


def _single(model):
    if model.m != 1:
        raise UnsupportedDimensionError(
            f"dynamic programming supports one asset, the market has {model.m}")


def interp_extrap(x, xp, fp):
    """Piecewise-linear interpolation with linear extrapolation at both ends."""
    x = np.asarray(x, dtype=float)
    i = np.clip(np.searchsorted(xp, x) - 1, 0, len(xp) - 2)
    x0, x1 = xp[i], xp[i + 1]
    w = (x - x0) / (x1 - x0)
    return fp[i] * (1 - w) + fp[i + 1] * w


class _Stage:
    """One backward-induction step: expectiles of -xi dS + V_next at each node."""

    def __init__(self, grid, model, contract, side, tau, t, values_next):
        atoms, _ = discretize_returns(model.mu[0], model.sigma[0], grid.K)
        x = grid.log_nodes
        s = np.exp(x)
        xn = x[:, None] + atoms[None, :]
        if t + 1 == grid.T:
            self.vnext = terminal_liability(contract, np.exp(xn)[..., None], side)
        else:
            self.vnext = interp_extrap(xn, x, values_next)
        self.dS = s[:, None] * np.expm1(atoms)[None, :]
        self.tau = tau

    def risk(self, xi, rows=slice(None)):
        """Expectile per node for actions ``xi`` of shape (n,) or (n, A)."""
        xi = np.asarray(xi, dtype=float)
        dS, vn = self.dS[rows], self.vnext[rows]
        if xi.ndim == 1:
            return expectile_sorted_rows(vn - xi[:, None] * dS, self.tau)
        return expectile_sorted_rows(vn[:, None, :] - xi[:, :, None] * dS[:, None, :], self.tau)


def _minimize_stage(stage, actions, n, chunk=64, iters=60):
    best_val = np.empty(n)
    best_xi = np.empty(n)
    for lo in range(0, n, chunk):
        rows = slice(lo, min(lo + chunk, n))
        nr = rows.stop - rows.start
        vals = stage.risk(np.broadcast_to(actions, (nr, actions.size)), rows)
        k = np.argmin(vals, axis=1)
        a = actions[np.maximum(k - 1, 0)]
        b = actions[np.minimum(k + 1, actions.size - 1)]
        # golden-section search on [a, b]
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc = stage.risk(c, rows)
        fd = stage.risk(d, rows)
        for _ in range(iters):
            left = fc < fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            new_c = b - GOLDEN * (b - a)
            new_d = a + GOLDEN * (b - a)
            c, d = np.where(left, new_c, d), np.where(left, c, new_d)
            probe = np.where(left, c, d)
            fp = stage.risk(probe, rows)
            fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        xi = 0.5 * (a + b)
        fx = stage.risk(xi, rows)
        grid_best = vals[np.arange(nr), k]
        use_grid = grid_best < fx
        best_val[rows] = np.where(use_grid, grid_best, fx)
        best_xi[rows] = np.where(use_grid, actions[k], xi)
    return best_val, best_xi


def solve_drm_dp(grid, model, contract, tau, side):
    """Optimal dynamic expectile risk-to-go and hedge on the grid."""
    _single(model)
    if contract.maturity != grid.T:
        raise ValueError("grid horizon differs from the contract maturity")
    nx = grid.log_nodes.size
    values = np.empty((grid.T + 1, nx))
    policy = np.zeros((grid.T, nx))
    values[-1] = terminal_liability(contract, np.exp(grid.log_nodes)[:, None], side)
    for t in reversed(range(grid.T)):
        stage = _Stage(grid, model, contract, side, tau, t, values[t + 1])
        values[t], policy[t] = _minimize_stage(stage, grid.actions, nx)
    return DpResult(grid.log_nodes, values, policy)


def evaluate_policy_dp(grid, model, contract, tau, side, policy, time_norm=None):
    """Dynamic expectile risk-to-go of a fixed policy.

    ``policy`` is either a (T, nx) table of actions on the grid nodes or a
    callable mapping state features (n, 2) to actions (n, 1).
    """
    _single(model)
    if contract.maturity != grid.T:
        raise ValueError("grid horizon differs from the contract maturity")
    nx = grid.log_nodes.size
    s = np.exp(grid.log_nodes)
    values = np.empty((grid.T + 1, nx))
    actions = np.zeros((grid.T, nx))
    values[-1] = terminal_liability(contract, s[:, None], side)
    for t in reversed(range(grid.T)):
        if callable(policy):
            feats = encode_state(s[:, None], model.s0, t, grid.T, time_norm)
            xi = np.clip(np.asarray(policy(feats)).reshape(nx), -1.0, 1.0)
        else:
            xi = np.asarray(policy, dtype=float)[t]
        stage = _Stage(grid, model, contract, side, tau, t, values[t + 1])
        values[t] = stage.risk(xi)
        actions[t] = xi
    return DpResult(grid.log_nodes, values, actions)
