"""Command-line entry point: ``expectile-erp [--config] [--seed] [--out] <command>``."""
from __future__ import annotations

import argparse
import json
import os
import sys

from .agents import ConfigError, TrainConfig, train_acrl, train_aorl
from .dp import DpGrid, solve_drm_dp
from .market import save_market, simulate_paths
from .neural import load_checkpoint, save_checkpoint
from .pricing import (ExperimentConfig, OrderingError, PriceReport,
                      dynamic_risk, equal_risk_price, run_experiment)
from .trinomial import TrinomialTree, format_report, time_inconsistency_report


def _config(args):
    d = {}
    if args.config:
        try:
            with open(args.config) as f:
                d = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"{args.config}: {e}") from e
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        return ExperimentConfig.from_dict(d)
    except ConfigError as e:
        raise ConfigError(f"{args.config}: {e}" if args.config else str(e)) from e


def _out(args, *parts):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, *parts)


def _sides(args, cfg):
    return [args.side] if getattr(args, "side", None) else list(cfg.sides)


def cmd_simulate(args):
    cfg = _config(args)
    model = cfg.market_model()
    T = args.T or cfg.maturity
    seeds = cfg.seeds()
    for name, n in (("train", cfg.n_train), ("valid", cfg.n_valid), ("test", cfg.n_test)):
        trajs = simulate_paths(model, T, n, seeds[f"{name}_paths"])
        trajs.to_csv(_out(args, f"{name}_paths.csv"))
    save_market(model, _out(args, "market.json"))
    print(f"wrote {cfg.n_train}/{cfg.n_valid}/{cfg.n_test} paths over {T} periods to {args.out}")


def cmd_trinomial(args):
    rep = time_inconsistency_report(TrinomialTree.example(), args.alpha)
    print(format_report(rep))
    if args.json:
        print(json.dumps(rep, indent=2))
    if args.out_given:
        with open(_out(args, "trinomial.json"), "w") as f:
            json.dump(rep, f, indent=2, sort_keys=True)
            f.write("\n")


def _train(args, trainer, tag):
    cfg = _config(args)
    model, contract, seeds = cfg.market_model(), cfg.option(), cfg.seeds()
    train = simulate_paths(model, cfg.maturity, cfg.n_train, seeds["train_paths"])
    valid = simulate_paths(model, cfg.maturity, cfg.n_valid, seeds["valid_paths"])
    base = cfg.train_config()
    for side in _sides(args, cfg):
        tc = TrainConfig.from_dict({**base.to_dict(), "seed": seeds[side]})
        b = trainer(tc, train, valid, contract, side)
        b.curves_to_csv(_out(args, f"curve_{tag}_{side}.csv"))
        save_checkpoint(b.actor, _out(args, f"actor_{tag}_{side}.json"))
        if b.critic is not None:
            save_checkpoint(b.critic, _out(args, f"critic_{tag}_{side}.json"))
        print(f"{side}: best validation {b.best_score():.6g} at episode {b.best_episode}")


def cmd_train_drm(args):
    _train(args, train_acrl, "acrl")


def cmd_train_srm(args):
    _train(args, train_aorl, "aorl")


def cmd_dp_solve(args):
    cfg = _config(args)
    model, contract = cfg.market_model(), cfg.option()
    tau = args.tau if args.tau is not None else cfg.train_config().tau
    opts = cfg.resolved()["dp"]
    grid = DpGrid.default(model, cfg.maturity, opts["n_nodes"], opts["n_actions"],
                          opts["K"], opts["width_sd"])
    for side in _sides(args, cfg):
        res = solve_drm_dp(grid, model, contract, tau, side)
        res.to_csv(_out(args, f"dp_{side}.csv"))
        s0 = model.s0[0]
        print(f"{side}: V0 = {res.value(0, s0):.6f}  xi0 = {res.action(0, s0):.6f}")


def cmd_eval(args):
    cfg = _config(args)
    model, contract, seeds = cfg.market_model(), cfg.option(), cfg.seeds()
    actor = load_checkpoint(args.actor)
    critic = load_checkpoint(args.critic) if args.critic else None
    test = simulate_paths(model, cfg.maturity, cfg.n_test, seeds["test_paths"])
    tau = cfg.train_config().tau
    rl_cfg = TrainConfig.from_dict({**cfg.rl_eval_config(tau).to_dict(), "seed": seeds["rl_eval"]})
    side = args.side or cfg.sides[0]
    rows = []
    for Tp in cfg.resolved_maturities():
        for e in cfg.estimators:
            v = dynamic_risk(actor, Tp, e, side, contract, test, tau, cfg.maturity,
                             model, rl_cfg, critic)
            rows.append({"maturity": Tp, "estimator": e, "side": side, "risk": v})
            print(f"T'={Tp:>3} {e:>6} {side}: {v:.6f}")
    with open(_out(args, f"eval_{side}.json"), "w") as f:
        json.dump(rows, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_price(args):
    if args.report:
        with open(args.report) as f:
            rep = PriceReport.from_dict(json.load(f))
        for r in rep.rows:
            erp = "" if r.erp is None else f"{r.erp:.6f}"
            print(f"T'={r.maturity:>3} {r.estimator:>6} writer={r.writer} buyer={r.buyer} erp={erp}")
        return
    if args.writer is None or args.buyer is None:
        raise ConfigError("price: pass --writer and --buyer, or --report")
    print(f"{equal_risk_price(args.writer, args.buyer):.10g}")


def cmd_run(args):
    cfg = _config(args)
    report = run_experiment(cfg, args.out, log=lambda m: print(m, file=sys.stderr))
    for r in report.rows:
        erp = "" if r.erp is None else f"{r.erp:.6f}"
        print(f"T'={r.maturity:>3} {r.estimator:>6} erp={erp}")


def build_parser():
    p = argparse.ArgumentParser(prog="expectile-erp",
                                description="Equal risk pricing under dynamic expectile risk.")
    p.add_argument("--config", help="experiment configuration (JSON)")
    p.add_argument("--seed", type=int, help="override the configuration seed")
    p.add_argument("--out", help="output directory (default: out)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate train/valid/test paths to CSV")
    s.add_argument("--T", type=int, help="number of periods (default: config maturity)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("trinomial", help="two-stage CVaR time-inconsistency example")
    s.add_argument("--alpha", type=float, default=0.6)
    s.add_argument("--json", action="store_true", help="also print the report as JSON")
    s.set_defaults(func=cmd_trinomial)

    for name, fn, help_ in (("train-drm", cmd_train_drm, "train the expectile actor-critic"),
                            ("train-srm", cmd_train_srm, "train the static-expectile actor")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--side", choices=("writer", "buyer"))
        s.set_defaults(func=fn)

    s = sub.add_parser("dp-solve", help="dynamic programming solution (single asset)")
    s.add_argument("--side", choices=("writer", "buyer"))
    s.add_argument("--tau", type=float)
    s.set_defaults(func=cmd_dp_solve)

    s = sub.add_parser("eval", help="risk of a saved policy over the maturity sweep")
    s.add_argument("--actor", required=True, help="actor checkpoint")
    s.add_argument("--critic", help="critic checkpoint used to warm start the RL estimator")
    s.add_argument("--side", choices=("writer", "buyer"))
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("price", help="equal risk price from two risks or a report")
    s.add_argument("--writer", type=float)
    s.add_argument("--buyer", type=float)
    s.add_argument("--report", help="price report JSON")
    s.set_defaults(func=cmd_price)

    s = sub.add_parser("run", help="full experiment with all artifacts")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.out_given = args.out is not None
    args.out = args.out or "out"
    try:
        args.func(args)
    except (ConfigError, OrderingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
