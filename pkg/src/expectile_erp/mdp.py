"""The option-hedging MDP: state features, rewards and minibatches.

State at time t: log cumulative return of every asset plus the remaining
time to maturity divided by a normalizing horizon. In the delayed-reward
variant the accumulated hedging wealth (scaled by the initial underlying
price) is appended.

Writer liability at maturity is +F, buyer liability is -F; the total
hedged loss of a path is ``liability - sum_t xi_t . dS_{t+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import payoff

SIDES = ("writer", "buyer")
REWARD_MODES = ("immediate", "delayed")


def side_sign(side):
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")
    return 1.0 if side == "writer" else -1.0


def terminal_liability(contract, terminal_prices, side):
    return side_sign(side) * payoff(contract, terminal_prices)


def encode_state(prices, s0, t, T, time_norm=None, wealth=None, wealth_scale=1.0):
    """Features (log(S_t/S_0)..., (T - t)/time_norm[, wealth/wealth_scale])."""
    prices = np.asarray(prices, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    if np.any(prices <= 0) or np.any(s0 <= 0):
        raise ValueError("prices must be positive")
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    norm = T if time_norm is None else time_norm
    logret = np.log(prices / s0)
    tt = np.full(logret.shape[:-1] + (1,), (T - t) / norm)
    parts = [logret, tt]
    if wealth is not None:
        parts.append(np.asarray(wealth, dtype=float).reshape(tt.shape) / wealth_scale)
    return np.concatenate(parts, axis=-1)


def reward(prices, action, next_prices):
    """Hedging portfolio gain xi . (S_{t+1} - S_t)."""
    dS = np.asarray(next_prices, dtype=float) - np.asarray(prices, dtype=float)
    r = np.sum(np.asarray(action, dtype=float) * dS, axis=-1)
    return r if np.ndim(r) else float(r)


@dataclass
class EpisodeBatch:
    t: int
    T: int
    states: np.ndarray          # (N, d)
    actions: np.ndarray         # (N, m)
    next_states: np.ndarray     # (N, d)
    rewards: np.ndarray         # (N,), zero in delayed mode
    terminal: bool              # t + 1 == T
    liabilities: np.ndarray     # (N,) terminal liability, meaningful if terminal
    side: str
    reward_mode: str
    next_wealth: np.ndarray | None = None     # delayed mode only

    @property
    def N(self):
        return self.states.shape[0]


class HedgingEnv:
    """Bundles a trajectory set with a contract, side and feature encoding."""

    def __init__(self, trajs, contract, side, reward_mode="immediate", time_norm=None):
        if reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        side_sign(side)
        if trajs.T < contract.maturity:
            raise ValueError("trajectories shorter than the contract maturity")
        self.paths = trajs.paths[:, :contract.maturity + 1]
        self.contract = contract
        self.side = side
        self.reward_mode = reward_mode
        self.T = contract.maturity
        self.time_norm = self.T if time_norm is None else time_norm
        self.s0 = self.paths[0, 0]
        self.wealth_scale = float(contract.reference_price(self.s0))
        self.liabilities = terminal_liability(contract, self.paths[:, -1], side)

    @property
    def n(self):
        return self.paths.shape[0]

    @property
    def m(self):
        return self.paths.shape[2]

    @property
    def state_dim(self):
        return self.m + 1 + (self.reward_mode == "delayed")

    def feature_scale(self):
        """Per-feature multipliers bringing state features to unit scale.

        Log-return features are divided by the sample standard deviation of
        the terminal log return; time and wealth features are left as is.
        """
        logret = np.log(self.paths[:, -1] / self.s0)
        sd = logret.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        scale = np.ones(self.state_dim)
        scale[:self.m] = 1.0 / sd
        return scale

    def features(self, t, idx=None, wealth=None):
        prices = self.paths[:, t] if idx is None else self.paths[idx, t]
        if self.reward_mode == "immediate":
            wealth = None
        elif wealth is None:
            wealth = np.zeros(prices.shape[0])
        return encode_state(prices, self.s0, t, self.T, self.time_norm,
                            wealth, self.wealth_scale)

    def rollout(self, policy, idx=None):
        """Deterministic rollout; returns actions (n, T, m) and wealth (n, T+1)."""
        paths = self.paths if idx is None else self.paths[idx]
        n = paths.shape[0]
        actions = np.empty((n, self.T, self.m))
        wealth = np.zeros((n, self.T + 1))
        for t in range(self.T):
            a = np.clip(policy(self.features(t, idx, wealth[:, t])), -1.0, 1.0)
            actions[:, t] = a
            wealth[:, t + 1] = wealth[:, t] + reward(paths[:, t], a, paths[:, t + 1])
        return actions, wealth

    def hedged_losses(self, policy, idx=None):
        _, wealth = self.rollout(policy, idx)
        lia = self.liabilities if idx is None else self.liabilities[idx]
        return lia - wealth[:, -1]

    def wealth_at(self, policy, t, idx):
        """Accumulated wealth at time t when following ``policy``."""
        w = np.zeros(len(idx))
        for s in range(t):
            a = np.clip(policy(self.features(s, idx, w)), -1.0, 1.0)
            w = w + reward(self.paths[idx, s], a, self.paths[idx, s + 1])
        return w

    def batch(self, t, policy, noise_sigma, rng, N=None):
        """Minibatch of (s_t, a_t, s_{t+1}) with Gaussian exploration at t."""
        if not 0 <= t < self.T:
            raise ValueError(f"t={t} outside [0, {self.T})")
        N = self.n if N is None else N
        if N > self.n:
            raise ValueError(f"minibatch of {N} from {self.n} trajectories")
        idx = np.arange(self.n) if N == self.n else np.sort(
            rng.choice(self.n, size=N, replace=False))
        delayed = self.reward_mode == "delayed"
        w = self.wealth_at(policy, t, idx) if delayed else None
        s = self.features(t, idx, w)
        a = policy(s)
        if noise_sigma > 0:
            a = a + noise_sigma * rng.standard_normal(a.shape)
        a = np.clip(a, -1.0, 1.0)
        gains = reward(self.paths[idx, t], a, self.paths[idx, t + 1])
        w_next = w + gains if delayed else None
        s_next = self.features(t + 1, idx, w_next)
        rewards = np.zeros(N) if delayed else gains
        return EpisodeBatch(t, self.T, s, a, s_next, rewards, t + 1 == self.T,
                            self.liabilities[idx], self.side, self.reward_mode, w_next)


def make_episode_batch(trajs, t, policy, noise_sigma, seed, side, contract, N,
                       reward_mode="immediate"):
    env = HedgingEnv(trajs, contract, side, reward_mode)
    rng = np.random.Generator(np.random.Philox(int(seed)))
    return env.batch(t, policy, noise_sigma, rng, N)


def total_hedged_loss(paths, policy, side, contract, time_norm=None):
    """Liability minus hedging gains along one path (T+1, m) or many (n, T+1, m)."""
    from .market import TrajectorySet
    p = np.asarray(paths, dtype=float)
    single = p.ndim == 2
    env = HedgingEnv(TrajectorySet(p[None] if single else p), contract, side,
                     time_norm=time_norm)
    loss = env.hedged_losses(policy)
    return float(loss[0]) if single else loss


def immediate_rewards(paths, actions):
    """Per-period rewards xi_t . dS_{t+1} for actions of shape (n, T, m)."""
    dS = np.diff(paths, axis=1)
    return np.sum(actions * dS, axis=-1)


def zero_policy(m):
    return lambda feats: np.zeros(np.shape(feats)[:-1] + (m,))
