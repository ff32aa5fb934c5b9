"""Equal risk prices, the maturity sweep and the end-to-end experiment runner.

The equal risk price of a contract is half the gap between the writer's
and the buyer's zero-capital hedging risks. A policy trained at horizon T
is reused for a shorter maturity T' by truncating the paths and feeding
the time feature (T' - t) / T, so the policy sees the same number of
remaining periods it saw during training.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .agents import ConfigError, TrainConfig, estimate_dynamic_risk_rl, train_acrl, train_aorl
from .dp import DpGrid, evaluate_policy_dp
from .market import MarketModel, OptionContract, payoff, simulate_paths, stock_market
from .mdp import HedgingEnv, side_sign
from .neural import save_checkpoint
from .risk import expectile

ESTIMATORS = ("RL", "DP", "static")
COMPLETION_MARKER = "COMPLETE"


class OrderingError(ValueError):
    """Writer risk below buyer risk: no equal risk price exists."""


class UnsupportedEstimatorError(ValueError):
    pass


def equal_risk_price(rho_w, rho_b):
    rho_w, rho_b = float(rho_w), float(rho_b)
    if not (np.isfinite(rho_w) and np.isfinite(rho_b)):
        raise OrderingError("risks must be finite")
    if rho_w < rho_b:
        raise OrderingError(f"writer risk {rho_w} is below buyer risk {rho_b}")
    return (rho_w - rho_b) / 2.0


@dataclass
class PriceRow:
    maturity: int
    estimator: str
    writer: float | None
    buyer: float | None
    erp: float | None = field(init=False)

    def __post_init__(self):
        # stored as the plain half-gap; an ordering violation is kept visible
        both = self.writer is not None and self.buyer is not None
        self.erp = (self.writer - self.buyer) / 2.0 if both else None


@dataclass
class PriceReport:
    rows: list = field(default_factory=list)
    policy: str = "ACRL"

    def add(self, maturity, estimator, writer, buyer):
        f = lambda v: None if v is None else float(v)
        self.rows.append(PriceRow(int(maturity), estimator, f(writer), f(buyer)))

    def get(self, maturity, estimator):
        for r in self.rows:
            if r.maturity == maturity and r.estimator == estimator:
                return r
        raise KeyError((maturity, estimator))

    def to_dict(self):
        return {"policy": self.policy,
                "rows": [{"maturity": r.maturity, "estimator": r.estimator,
                          "writer": r.writer, "buyer": r.buyer, "erp": r.erp}
                         for r in self.rows]}

    @classmethod
    def from_dict(cls, d):
        rep = cls(policy=d.get("policy", "ACRL"))
        for r in d["rows"]:
            rep.add(r["maturity"], r["estimator"], r["writer"], r["buyer"])
        return rep

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def table_csv(self, path):
        """Rows = (quantity, estimator), columns = maturities, longest first."""
        mats = sorted({r.maturity for r in self.rows}, reverse=True)
        ests = [e for e in ESTIMATORS if any(r.estimator == e for r in self.rows)]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["policy", "quantity", "estimator"] + [str(T) for T in mats])
            for q in ("writer", "buyer", "erp"):
                for e in ests:
                    vals = []
                    for T in mats:
                        try:
                            v = getattr(self.get(T, e), q)
                            vals.append("" if v is None else repr(v))
                        except KeyError:
                            vals.append("")
                    w.writerow([self.policy, q, e] + vals)


def dynamic_risk(policy, maturity, estimator, side, contract, test_trajs, tau,
                 time_norm, model=None, rl_config=None, critic_init=None, dp_grid=None):
    """Risk at time 0 of ``policy`` hedging ``contract`` cut to ``maturity``.

    ``estimator`` is RL (critic-only regression on the test paths), DP
    (backward induction under ``model``) or static (expectile of the total
    hedged loss over the test paths).
    """
    if estimator not in ESTIMATORS:
        raise UnsupportedEstimatorError(f"unknown estimator {estimator!r}")
    if estimator == "DP":
        if model is None or model.m != 1:
            raise UnsupportedEstimatorError(
                "the DP estimator needs a single-asset market model")
        if contract.kind == "basket_average_call":
            raise UnsupportedEstimatorError("the DP estimator does not price baskets")
    s0 = test_trajs.paths[0, 0]
    if maturity == 0:
        return side_sign(side) * float(payoff(contract, s0))
    c = contract.with_maturity(maturity)
    trajs = test_trajs.truncate(maturity)
    if estimator == "static":
        env = HedgingEnv(trajs, c, side, time_norm=time_norm)
        return expectile(env.hedged_losses(policy), None, tau)
    if estimator == "DP":
        grid = dp_grid(maturity) if dp_grid is not None else DpGrid.default(model, maturity)
        res = evaluate_policy_dp(grid, model, c, tau, side, policy, time_norm)
        return res.value(0, model.s0[0])
    cfg = rl_config if rl_config is not None else TrainConfig(tau=tau, noise_sigma=0.0)
    return estimate_dynamic_risk_rl(policy, trajs, cfg, c, side, critic_init, time_norm)


def multi_maturity_eval(bundles, maturities, test_trajs, contract, estimators,
                        model=None, rl_config=None, dp_grid=None):
    """PriceReport over ``maturities`` for the trained bundles.

    ``bundles`` maps side to a trained AgentBundle; with a single side the
    other column and the price are left empty. The RL estimator warm starts
    from each bundle's trained critic when it has one.
    """
    for e in estimators:
        if e not in ESTIMATORS:
            raise UnsupportedEstimatorError(f"unknown estimator {e!r}")
    sides = [s for s in ("writer", "buyer") if s in bundles]
    if not sides or len(sides) != len(bundles):
        raise ValueError("bundles must map 'writer' and/or 'buyer' to agents")
    T = contract.maturity
    if any(not 0 <= Tp <= T for Tp in maturities):
        raise ValueError(f"maturities must lie in [0, {T}]")
    report = PriceReport()
    for Tp in sorted(maturities, reverse=True):
        for e in estimators:
            vals = {}
            for side in sides:
                b = bundles[side]
                tau = b.config.tau
                cfg = rl_config
                if cfg is not None and cfg.tau != tau:
                    cfg = TrainConfig.from_dict({**cfg.to_dict(), "tau": tau})
                vals[side] = dynamic_risk(b.actor, Tp, e, side, contract, test_trajs, tau,
                                          b.env.time_norm, model, cfg, b.critic, dp_grid)
            report.add(Tp, e, vals.get("writer"), vals.get("buyer"))
    return report


# -- experiment configuration -------------------------------------------------

@dataclass
class ExperimentConfig:
    market: dict = field(default_factory=lambda: {"assets": ["APPL"]})
    contract: dict | None = None        # default: at-the-money vanilla call
    maturity: int = 4
    sides: tuple = ("writer", "buyer")
    train: dict = field(default_factory=dict)
    rl_eval: dict = field(default_factory=lambda: {"episodes": 3000, "noise_sigma": 0.0})
    aorl: bool = False
    maturities: tuple | None = None     # default: maturity down to 0
    estimators: tuple = ("RL", "DP", "static")
    n_train: int = 1000
    n_valid: int = 1000
    n_test: int = 1000
    dp: dict = field(default_factory=dict)
    seed: int = 0

    FIELDS = ("market", "contract", "maturity", "sides", "train", "rl_eval", "aorl",
              "maturities", "estimators", "n_train", "n_valid", "n_test", "dp", "seed")

    def validate(self):
        for name in ("n_train", "n_valid", "n_test"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name}: dataset counts must be at least 1")
        if int(self.maturity) < 1:
            raise ConfigError("maturity: must be at least one period")
        if not self.sides or len(set(self.sides)) != len(self.sides):
            raise ConfigError("sides: need distinct sides")
        for s in self.sides:
            if s not in ("writer", "buyer"):
                raise ConfigError(f"sides: unknown side {s!r}")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ConfigError(f"estimators: unknown estimator {e!r}")
        for T in self.resolved_maturities():
            if not 0 <= T <= self.maturity:
                raise ConfigError(f"maturities: {T} outside [0, {self.maturity}]")
        model = self.market_model()
        if "DP" in self.estimators and model.m != 1:
            raise ConfigError("estimators: DP needs a single-asset market")
        c = self.option()
        if c.maturity != self.maturity:
            raise ConfigError("contract.maturity: differs from maturity")
        tc = self.train_config()
        self.rl_eval_config(tc.tau)
        if tc.N > self.n_train:
            raise ConfigError(f"train.N: minibatch {tc.N} exceeds n_train={self.n_train}")
        unknown = set(self.dp) - {"n_nodes", "n_actions", "K", "width_sd"}
        if unknown:
            raise ConfigError(f"dp: unknown fields {sorted(unknown)}")
        return self

    def resolved_maturities(self):
        if self.maturities is None:
            return tuple(range(self.maturity, -1, -1))
        return tuple(int(T) for T in self.maturities)

    def market_model(self):
        try:
            if "assets" in self.market:
                return stock_market(self.market["assets"])
            return MarketModel.from_dict(self.market)
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"market: {e}") from e

    def option(self):
        model = self.market_model()
        try:
            if self.contract is None:
                return OptionContract("vanilla_call", float(model.s0[0]), int(self.maturity))
            d = {"maturity": self.maturity, **self.contract}
            if "strike" not in d:
                d["strike"] = float(OptionContract(d["kind"], 1.0, 1, d.get("weights"),
                                                   d.get("asset", 0)).reference_price(model.s0))
            return OptionContract.from_dict(d)
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"contract: {e}") from e

    def train_config(self):
        try:
            return TrainConfig.from_dict({"seed": self.seed, **self.train})
        except (ConfigError, TypeError) as e:
            raise ConfigError(f"train: {e}") from e

    def rl_eval_config(self, tau):
        try:
            return TrainConfig.from_dict({"tau": tau, "seed": self.seed, **self.rl_eval})
        except (ConfigError, TypeError) as e:
            raise ConfigError(f"rl_eval: {e}") from e

    def seeds(self):
        """Independent integer seeds for every random stage of the pipeline."""
        ss = np.random.SeedSequence(int(self.seed))
        st = ss.generate_state(6, dtype=np.uint32)
        names = ("train_paths", "valid_paths", "test_paths", "writer", "buyer", "rl_eval")
        return {k: int(v) for k, v in zip(names, st)}

    def to_dict(self):
        return {"market": self.market, "contract": self.contract, "maturity": self.maturity,
                "sides": list(self.sides), "train": self.train, "rl_eval": self.rl_eval,
                "aorl": self.aorl,
                "maturities": None if self.maturities is None else list(self.maturities),
                "estimators": list(self.estimators), "n_train": self.n_train,
                "n_valid": self.n_valid, "n_test": self.n_test, "dp": self.dp,
                "seed": self.seed}

    def resolved(self):
        """Fully explicit configuration: every default written out."""
        model = self.market_model()
        tc = self.train_config()
        return {"market": model.to_dict(), "contract": self.option().to_dict(),
                "maturity": self.maturity, "sides": list(self.sides),
                "train": tc.to_dict(), "rl_eval": self.rl_eval_config(tc.tau).to_dict(),
                "aorl": self.aorl, "maturities": list(self.resolved_maturities()),
                "estimators": list(self.estimators), "n_train": self.n_train,
                "n_valid": self.n_valid, "n_test": self.n_test,
                "dp": {"n_nodes": 401, "n_actions": 201, "K": 51, "width_sd": 6.0, **self.dp},
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.FIELDS)
        if unknown:
            raise ConfigError(f"unknown configuration fields: {sorted(unknown)}")
        d = dict(d)
        for k in ("sides", "estimators", "maturities"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        try:
            cfg = cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e
        return cfg.validate()

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                d = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"{path}: {e}") from e
        try:
            return cls.from_dict(d)
        except ConfigError as e:
            raise ConfigError(f"{path}: {e}") from e


# -- experiment runner --------------------------------------------------------

def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def run_experiment(config, out_dir, log=None):
    """Simulate, train, sweep maturities and write every artifact to ``out_dir``.

    The completion marker is removed first and written last, so a directory
    without it holds partial output.
    """
    config.validate()
    log = log or (lambda msg: None)
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, COMPLETION_MARKER)
    if os.path.exists(marker):
        os.remove(marker)
    resolved = config.resolved()
    seeds = config.seeds()
    _write_json(os.path.join(out_dir, "config.resolved.json"), resolved)
    _write_json(os.path.join(out_dir, "manifest.json"),
                {"config": resolved, "seeds": seeds, "format": "expectile_erp.manifest",
                 "version": 1})

    model = config.market_model()
    contract = config.option()
    T = config.maturity
    train = simulate_paths(model, T, config.n_train, seeds["train_paths"])
    valid = simulate_paths(model, T, config.n_valid, seeds["valid_paths"])
    test = simulate_paths(model, T, config.n_test, seeds["test_paths"])
    test.to_csv(os.path.join(out_dir, "test_paths.csv"))

    base = config.train_config()
    bundles, baselines = {}, {}
    for side in config.sides:
        cfg = TrainConfig.from_dict({**base.to_dict(), "seed": seeds[side]})
        log(f"training ACRL {side}")
        b = train_acrl(cfg, train, valid, contract, side)
        bundles[side] = b
        b.curves_to_csv(os.path.join(out_dir, f"curve_acrl_{side}.csv"))
        save_checkpoint(b.actor, os.path.join(out_dir, f"actor_acrl_{side}.json"))
        save_checkpoint(b.critic, os.path.join(out_dir, f"critic_acrl_{side}.json"))
        if config.aorl:
            log(f"training AORL {side}")
            a = train_aorl(cfg, train, valid, contract, side)
            baselines[side] = a
            a.curves_to_csv(os.path.join(out_dir, f"curve_aorl_{side}.csv"))
            save_checkpoint(a.actor, os.path.join(out_dir, f"actor_aorl_{side}.json"))

    dp_opts = resolved["dp"]
    grid = lambda Tp: DpGrid.default(model, Tp, dp_opts["n_nodes"], dp_opts["n_actions"],
                                     dp_opts["K"], dp_opts["width_sd"])
    rl_cfg = TrainConfig.from_dict({**config.rl_eval_config(base.tau).to_dict(),
                                    "seed": seeds["rl_eval"]})
    mats = config.resolved_maturities()
    log("evaluating the maturity sweep")
    report = multi_maturity_eval(bundles, mats, test, contract, config.estimators,
                                 model, rl_cfg, grid)
    report.to_json(os.path.join(out_dir, "price_report.json"))
    report.table_csv(os.path.join(out_dir, "risk_by_maturity.csv"))
    if baselines:
        rep = multi_maturity_eval(baselines, mats, test, contract, config.estimators,
                                  model, rl_cfg, grid)
        rep.policy = "AORL"
        rep.to_json(os.path.join(out_dir, "price_report_aorl.json"))
        rep.table_csv(os.path.join(out_dir, "risk_by_maturity_aorl.csv"))
    with open(marker, "w") as f:
        f.write("ok\n")
    return report
