"""Price an at-the-money call on one stock with the expectile actor-critic.

Trains a writer and a buyer, checks both against dynamic programming, and
prints the equal risk price over a sweep of maturities. Roughly four
minutes on one core; pass a smaller episode count to go faster:

    python3 demos/desk_pricing.py [episodes]
"""
import sys

from expectile_erp.agents import TrainConfig, train_acrl
from expectile_erp.dp import DpGrid, evaluate_policy_dp, solve_drm_dp
from expectile_erp.market import OptionContract, simulate_paths, stock_market
from expectile_erp.pricing import multi_maturity_eval

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 20000
market = stock_market(["APPL"])
T, tau = 4, 0.9
call = OptionContract("vanilla_call", market.s0[0], T)
train, valid, test = (simulate_paths(market, T, 1000, s) for s in (1, 2, 3))
grid = DpGrid.default(market, T)

bundles = {}
for side in ("writer", "buyer"):
    cfg = TrainConfig(tau=tau, episodes=episodes, noise_sigma=0.2,
                      refine_episodes=episodes // 2, seed=11)
    b = bundles[side] = train_acrl(cfg, train, valid, call, side)
    best = solve_drm_dp(grid, market, call, tau, side).value(0, market.s0[0])
    mine = evaluate_policy_dp(grid, market, call, tau, side, b.actor).value(0, market.s0[0])
    print(f"{side}: optimal {best:.4f}, learned policy {mine:.4f}, critic {b.q0(b.env):.4f}")

rl = TrainConfig(tau=tau, episodes=3000, noise_sigma=0.0, seed=5)
report = multi_maturity_eval(bundles, range(T, -1, -1), test, call, ["RL", "DP", "static"],
                             market, rl)
print("\nmaturity estimator  writer   buyer    price")
for r in report.rows:
    print(f"{r.maturity:>8} {r.estimator:>9} {r.writer:8.4f} {r.buyer:8.4f} {r.erp:8.4f}")
