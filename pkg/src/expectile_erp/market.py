"""Correlated geometric Brownian motion market and option payoffs.

Gaussian draws come from numpy's Philox4x32-10 bit generator, a
counter-based generator whose stream is fully determined by its integer
key, so identical seeds give bit-identical paths on any platform running
numpy's Philox.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

ASSETS = ("APPL", "AMZN", "FB", "JPM", "GOOGL")

# Stock data used throughout the experiments (monthly log-return moments).
STOCK_S0 = np.array([78.81, 1877.94, 221.77, 137.25, 1450.16])
STOCK_MU = np.array([-0.0015, -0.0017, -0.0001, 0.0006, -0.0004])
STOCK_SIGMA = np.array([0.0298, 0.0243, 0.0295, 0.0345, 0.0246])
STOCK_CORR = np.array([
    [1.0000, 0.7133, 0.7744, 0.5383, 0.7680],
    [0.7133, 1.0000, 0.6903, 0.2685, 0.6837],
    [0.7744, 0.6903, 1.0000, 0.4807, 0.8054],
    [0.5383, 0.2685, 0.4807, 1.0000, 0.6060],
    [0.7680, 0.6837, 0.8054, 0.6060, 1.0000],
])


class DecompositionError(ValueError):
    """Raised when a correlation matrix has no Cholesky factor."""


def cholesky(corr, tol=1e-10):
    """Lower-triangular L with L @ L.T == corr.

    Unlike ``np.linalg.cholesky`` this accepts positive *semi*definite
    input: a pivot within ``tol`` of zero gives a zero column.
    """
    a = np.asarray(corr, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DecompositionError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=tol, rtol=0.0):
        raise DecompositionError("matrix is not symmetric")
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d < -tol:
            raise DecompositionError(
                f"matrix is not positive semidefinite: pivot {j} is {d:.3e}")
        if d <= tol:
            # degenerate direction; the rest of the column must vanish too
            resid = a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]
            if np.any(np.abs(resid) > np.sqrt(tol)):
                raise DecompositionError(
                    f"matrix is not positive semidefinite: pivot {j} is zero "
                    "with nonzero off-diagonal remainder")
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


@dataclass
class MarketModel:
    s0: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray

    def __post_init__(self):
        self.s0 = np.atleast_1d(np.asarray(self.s0, dtype=float))
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        self.corr = np.atleast_2d(np.asarray(self.corr, dtype=float))
        m = self.s0.shape[0]
        if m < 1:
            raise ValueError("need at least one asset")
        if self.mu.shape != (m,) or self.sigma.shape != (m,) or self.corr.shape != (m, m):
            raise ValueError("inconsistent market dimensions")
        if np.any(self.s0 <= 0):
            raise ValueError("initial prices must be positive")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be nonnegative")
        if not np.allclose(np.diag(self.corr), 1.0, atol=1e-12):
            raise ValueError("correlation matrix needs a unit diagonal")
        cholesky(self.corr)

    @property
    def m(self):
        return self.s0.shape[0]

    @property
    def cov(self):
        return self.corr * np.outer(self.sigma, self.sigma)

    def subset(self, idx):
        """Market restricted to the assets in ``idx``."""
        idx = np.atleast_1d(idx)
        return MarketModel(self.s0[idx], self.mu[idx], self.sigma[idx],
                           self.corr[np.ix_(idx, idx)])

    def to_dict(self):
        return {"s0": self.s0.tolist(), "mu": self.mu.tolist(),
                "sigma": self.sigma.tolist(), "corr": self.corr.tolist()}

    @classmethod
    def from_dict(cls, d):
        missing = {"s0", "mu", "sigma", "corr"} - set(d)
        if missing:
            raise ValueError(f"market config missing fields: {sorted(missing)}")
        return cls(d["s0"], d["mu"], d["sigma"], d["corr"])


def stock_market(assets=None):
    """The five-stock market, or the sub-market named by ``assets``."""
    model = MarketModel(STOCK_S0, STOCK_MU, STOCK_SIGMA, STOCK_CORR)
    if assets is None:
        return model
    idx = [ASSETS.index(a) if isinstance(a, str) else int(a) for a in assets]
    return model.subset(idx)


def load_market(path):
    with open(path) as f:
        return MarketModel.from_dict(json.load(f))


def save_market(model, path):
    with open(path, "w") as f:
        json.dump(model.to_dict(), f, indent=2)


@dataclass
class TrajectorySet:
    paths: np.ndarray      # (n, T+1, m)
    seed: int | None = None

    @property
    def n(self):
        return self.paths.shape[0]

    @property
    def T(self):
        return self.paths.shape[1] - 1

    @property
    def m(self):
        return self.paths.shape[2]

    def truncate(self, T):
        """First ``T`` periods of every path."""
        if T > self.T:
            raise ValueError(f"cannot truncate {self.T}-period paths to {T}")
        return TrajectorySet(self.paths[:, :T + 1].copy(), self.seed)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["traj_id", "t"] + [f"asset_{j}" for j in range(self.m)])
            for i in range(self.n):
                for t in range(self.T + 1):
                    w.writerow([i, t] + [repr(float(v)) for v in self.paths[i, t]])

    @classmethod
    def from_csv(cls, path, seed=None):
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r)
            if header[:2] != ["traj_id", "t"]:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [(int(row[0]), int(row[1]), [float(v) for v in row[2:]]) for row in r]
        n = max(row[0] for row in rows) + 1
        T = max(row[1] for row in rows)
        m = len(header) - 2
        paths = np.full((n, T + 1, m), np.nan)
        for i, t, vals in rows:
            paths[i, t] = vals
        if np.isnan(paths).any():
            raise ValueError(f"{path}: missing trajectory rows")
        return cls(paths, seed)


def simulate_paths(model, T, n, seed):
    """``n`` price paths over ``T`` periods with jointly Gaussian log returns."""
    if n < 1 or T < 1:
        raise ValueError("need n >= 1 and T >= 1")
    L = cholesky(model.corr)
    rng = np.random.Generator(np.random.Philox(int(seed)))
    z = rng.standard_normal((n, T, model.m))
    r = model.mu + (z @ L.T) * model.sigma
    paths = np.empty((n, T + 1, model.m))
    paths[:, 0] = model.s0
    paths[:, 1:] = model.s0 * np.exp(np.cumsum(r, axis=1))
    return TrajectorySet(paths, int(seed))


@dataclass
class OptionContract:
    kind: str
    strike: float
    maturity: int
    weights: np.ndarray | None = field(default=None)
    asset: int = 0

    KINDS = ("vanilla_call", "basket_average_call", "zero")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown contract kind {self.kind!r}")
        if not self.strike > 0:
            raise ValueError("strike must be positive")
        if self.maturity < 1:
            raise ValueError("maturity must be at least one period")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if np.any(self.weights < 0) or not np.isclose(self.weights.sum(), 1.0):
                raise ValueError("basket weights must be nonnegative and sum to 1")

    def basket_weights(self, m):
        if self.weights is None:
            return np.full(m, 1.0 / m)
        if self.weights.shape != (m,):
            raise ValueError(f"basket has {self.weights.shape[0]} weights for {m} assets")
        return self.weights

    def with_maturity(self, T):
        return OptionContract(self.kind, self.strike, T, self.weights, self.asset)

    def reference_price(self, prices):
        """Price of the underlying the payoff is written on."""
        prices = np.asarray(prices, dtype=float)
        if self.kind == "basket_average_call":
            return prices @ self.basket_weights(prices.shape[-1])
        return prices[..., self.asset]

    def to_dict(self):
        return {"kind": self.kind, "strike": self.strike, "maturity": self.maturity,
                "weights": None if self.weights is None else self.weights.tolist(),
                "asset": self.asset}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d["strike"]), int(d["maturity"]),
                   d.get("weights"), int(d.get("asset", 0)))


def payoff(contract, terminal_prices):
    """Call payoff on the last axis of ``terminal_prices`` (vectorized)."""
    s = np.asarray(terminal_prices, dtype=float)
    if contract.kind == "zero":
        return np.zeros(s.shape[:-1]) if s.ndim > 1 else 0.0
    out = np.maximum(contract.reference_price(s) - contract.strike, 0.0)
    return out if np.ndim(out) else float(out)
