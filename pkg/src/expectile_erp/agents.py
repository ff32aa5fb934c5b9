"""Expectile actor-critic training (ACRL), the static-expectile actor-only
baseline (AORL) and the critic-only out-of-sample dynamic risk estimator.

Critic targets follow the risk-to-go recursion

    Q_t(s, a) = expectile_tau( -r(s, a, s') + Q_{t+1}(s', pi(s')) | s )

with the terminal risk-to-go equal to the liability (+F writer, -F buyer).
The critic is regressed on the expectile score of the residual
``target - Q``; the actor descends the critic through ``dQ/da``.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .mdp import HedgingEnv
from .neural import CriticNet, FeedforwardNet, make_optimizer, soft_update
from .risk import expectile, expectile_score, expectile_weights


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    tau: float = 0.9
    episodes: int = 2000
    N: int = 256
    lr_critic: float = 1e-3
    lr_actor: float = 1e-4
    alpha_tgt: float = 1e-2
    noise_sigma: float = 0.05
    validation_taus: tuple = (0.9,)
    validation_every: int = 100
    seed: int = 0
    optimizer: str = "adam"
    hidden: int = 32
    reward_mode: str = "immediate"
    refine_episodes: int = 0        # critic-only episodes after training, actor frozen

    def validate(self):
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        for name in ("lr_critic", "lr_actor", "alpha_tgt", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.alpha_tgt > 1:
            raise ConfigError("alpha_tgt must not exceed 1")
        if self.episodes < 0 or self.refine_episodes < 0 or self.N < 1 \
                or self.validation_every < 1:
            raise ConfigError("episodes, N and validation_every must be positive")
        if not self.validation_taus:
            raise ConfigError("validation_taus is empty")
        if any(not self.tau <= v < 1.0 for v in self.validation_taus):
            raise ConfigError("validation_taus must lie in [tau, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.reward_mode not in ("immediate", "delayed"):
            raise ConfigError(f"unknown reward_mode {self.reward_mode!r}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["validation_taus"] = list(self.validation_taus)
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training fields: {sorted(unknown)}")
        d = dict(d)
        if "validation_taus" in d:
            d["validation_taus"] = tuple(d["validation_taus"])
        return cls(**d).validate()


@dataclass
class AgentBundle:
    actor: FeedforwardNet
    critic: CriticNet | None
    target_actor: FeedforwardNet | None
    target_critic: CriticNet | None
    history: list = field(default_factory=list)    # (episode, {tau: score})
    best_episode: int | None = None
    config: TrainConfig | None = None
    env: HedgingEnv | None = None

    def best_score(self, tau=None):
        tau = self.config.tau if tau is None else tau
        for ep, scores in self.history:
            if ep == self.best_episode:
                return scores[tau]
        return None

    def q0(self, env):
        """Critic estimate of the risk at the initial state."""
        s = env.features(0, np.array([0]))
        return float(self.critic(s, self.actor(s))[0])

    def curves_to_csv(self, path):
        write_learning_curve(self.history, path)


def write_learning_curve(history, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["episode", "tau_level", "score"])
        for ep, scores in history:
            for tau in sorted(scores):
                w.writerow([ep, repr(float(tau)), repr(float(scores[tau]))])


# -- single updates ---------------------------------------------------------

def critic_target(batch, target_actor, target_critic):
    """Bootstrap values whose conditional expectile the critic should learn."""
    if batch.terminal:
        if batch.reward_mode == "delayed":
            return batch.liabilities - batch.next_wealth
        return batch.liabilities - batch.rewards
    a_next = target_actor(batch.next_states)
    return target_critic(batch.next_states, a_next) - batch.rewards


def critic_update(critic, batch, targets, tau, optimizer):
    """One gradient step on the mean expectile score of ``targets - Q``."""
    q = critic(batch.states, batch.actions)
    _, sub = expectile_score(np.asarray(targets) - q, tau)
    rec = critic.backward(batch.states, batch.actions, -sub / batch.N)
    optimizer.step(critic.params, rec.params)
    return critic


def actor_update(actor, critic, states, optimizer):
    """One descent step on mean_i Q(s_i, pi(s_i)) through a frozen critic."""
    n = states.shape[0]
    a = actor(states)
    dq_da = critic.grad_wrt_action(states, a, 1.0 / n)
    rec = actor.backward(states, dq_da)
    optimizer.step(actor.params, rec.params)
    return actor


# -- validation -------------------------------------------------------------

def validation_scores(policy, env, tau_list):
    """Static expectiles of the total hedged loss over ``env``'s trajectories."""
    losses = env.hedged_losses(policy)
    return {float(tau): expectile(losses, None, tau) for tau in tau_list}


# -- ACRL -------------------------------------------------------------------

def _rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def init_networks(state_dim, m, hidden, rng, input_scale=None):
    actor = FeedforwardNet([state_dim, hidden, hidden, m], tanh_output=True, rng=rng,
                           input_scale=input_scale)
    critic = CriticNet(state_dim, m, hidden, rng=rng, input_scale=input_scale)
    return actor, critic


def train_acrl(config, train_trajs, valid_trajs, contract, side, time_norm=None):
    config.validate()
    env = HedgingEnv(train_trajs, contract, side, config.reward_mode, time_norm)
    venv = HedgingEnv(valid_trajs, contract, side, config.reward_mode, env.time_norm)
    if config.N > env.n:
        raise ConfigError(f"minibatch N={config.N} exceeds {env.n} training trajectories")
    rng = _rng(config.seed)
    actor, critic = init_networks(env.state_dim, env.m, config.hidden, rng,
                               env.feature_scale())
    t_actor, t_critic = actor.copy(), critic.copy()
    opt_c = make_optimizer(config.optimizer, config.lr_critic)
    opt_a = make_optimizer(config.optimizer, config.lr_actor)
    taus = sorted(set(config.validation_taus) | {config.tau})

    bundle = AgentBundle(actor, critic, t_actor, t_critic, config=config)
    best = None

    def record(ep):
        nonlocal best
        scores = validation_scores(actor, venv, taus)
        bundle.history.append((ep, scores))
        if best is None or scores[config.tau] < best[0]:
            best = (scores[config.tau], ep, actor.copy(), critic.copy(),
                    t_actor.copy(), t_critic.copy())

    record(0)
    for ep in range(1, config.episodes + 1):
        t = int(rng.integers(env.T))
        batch = env.batch(t, actor, config.noise_sigma, rng, config.N)
        y = critic_target(batch, t_actor, t_critic)
        critic_update(critic, batch, y, config.tau, opt_c)
        actor_update(actor, critic, batch.states, opt_a)
        soft_update(t_critic, critic, config.alpha_tgt)
        soft_update(t_actor, actor, config.alpha_tgt)
        if ep % config.validation_every == 0:
            record(ep)

    _, bundle.best_episode, bundle.actor, bundle.critic, \
        bundle.target_actor, bundle.target_critic = best
    if config.refine_episodes:
        # let the critic catch up with the selected, now frozen, policy
        bundle.critic, bundle.target_critic = _fit_critic(
            bundle.actor, env, bundle.critic, bundle.target_critic, config,
            config.refine_episodes, 0.0, rng)
    bundle.env = env
    return bundle


def _fit_critic(policy, env, critic, t_critic, config, episodes, noise_sigma, rng):
    opt = make_optimizer(config.optimizer, config.lr_critic)
    N = min(config.N, env.n)
    for _ in range(episodes):
        t = int(rng.integers(env.T))
        batch = env.batch(t, policy, noise_sigma, rng, N)
        y = critic_target(batch, policy, t_critic)
        critic_update(critic, batch, y, config.tau, opt)
        soft_update(t_critic, critic, config.alpha_tgt)
    return critic, t_critic


# -- AORL -------------------------------------------------------------------

def aorl_gradient(actor, env, tau):
    """Static tau-expectile of the hedged losses and its parameter gradient.

    The expectile q solves sum_i w_i (L_i - q) = 0 with w_i = tau above q and
    1 - tau below, so dq = sum_i w_i dL_i / sum_i w_i away from ties.
    """
    n, T, m = env.n, env.T, env.m
    feats = np.stack([env.features(t) for t in range(T)], axis=1)    # (n, T, d)
    actions = np.clip(actor(feats.reshape(n * T, -1)), -1, 1).reshape(n, T, m)
    dS = np.diff(env.paths, axis=1)
    losses = env.liabilities - np.sum(actions * dS, axis=(1, 2))
    q = expectile(losses, None, tau)
    w = expectile_weights(losses, q, tau)
    w = w / w.sum()
    upstream = -(w[:, None, None] * dS).reshape(n * T, m)
    rec = actor.backward(feats.reshape(n * T, -1), upstream)
    return q, rec.params


def train_aorl(config, train_trajs, valid_trajs, contract, side, time_norm=None):
    """Full-batch descent on the static expectile of the total hedged loss."""
    config.validate()
    env = HedgingEnv(train_trajs, contract, side, "immediate", time_norm)
    venv = HedgingEnv(valid_trajs, contract, side, "immediate", env.time_norm)
    rng = _rng(config.seed)
    actor, _ = init_networks(env.state_dim, env.m, config.hidden, rng,
                               env.feature_scale())
    opt = make_optimizer(config.optimizer, config.lr_actor)
    taus = sorted(set(config.validation_taus) | {config.tau})
    bundle = AgentBundle(actor, None, None, None, config=config)
    best = None
    for ep in range(config.episodes + 1):
        if ep % config.validation_every == 0:
            scores = validation_scores(actor, venv, taus)
            bundle.history.append((ep, scores))
            if best is None or scores[config.tau] < best[0]:
                best = (scores[config.tau], ep, actor.copy())
        if ep == config.episodes:
            break
        _, grads = aorl_gradient(actor, env, config.tau)
        opt.step(actor.params, grads)
    _, bundle.best_episode, bundle.actor = best
    bundle.env = env
    return bundle


# -- critic-only estimator --------------------------------------------------

def estimate_dynamic_risk_rl(policy, test_trajs, config, contract, side,
                             critic_init=None, time_norm=None, return_critic=False):
    """Out-of-sample dynamic risk of a frozen policy by training only a critic."""
    config.validate()
    env = HedgingEnv(test_trajs, contract, side, config.reward_mode, time_norm)
    rng = _rng(config.seed)
    if critic_init is not None:
        critic = critic_init.copy()
    else:
        _, critic = init_networks(env.state_dim, env.m, config.hidden, rng,
                               env.feature_scale())
    critic, _ = _fit_critic(policy, env, critic, critic.copy(), config, config.episodes,
                            config.noise_sigma, rng)
    s = env.features(0, np.array([0]))
    q0 = float(critic(s, policy(s))[0])
    return (q0, critic) if return_critic else q0
