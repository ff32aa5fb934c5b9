"""Why a static CVaR hedge is not time consistent, on a two-stage tree.

Run:  python3 demos/time_inconsistency.py
"""
from expectile_erp.trinomial import (TrinomialTree, format_report, solve_conditional_cvar,
                                     solve_dynamic_cvar_hedge, solve_static_cvar_hedge,
                                     time_inconsistency_report)

tree = TrinomialTree.example()
alpha = 0.6

# Plan once at t = 0 for the whole horizon.
static = solve_static_cvar_hedge(tree, alpha)
print(f"static plan: xi0={static.xi0:.4f}, xi1={static.xi1.round(4)}, CVaR={static.risk:.4f}")

# At t = 1 the hedger re-optimizes the conditional CVaR and drifts off the plan,
# so the risk actually borne is higher than promised.
rep = time_inconsistency_report(tree, alpha)
print(format_report(rep))

# A nested criterion has no such gap: re-solving at t = 1 returns its own positions.
dyn = solve_dynamic_cvar_hedge(tree, alpha)
replanned = [solve_conditional_cvar(tree, b, dyn.xi0, alpha) for b in (1, 2, 3)]
print(f"nested plan: xi0={dyn.xi0:.4f}, xi1={dyn.xi1.round(4)}, risk={dyn.risk:.4f}")
print(f"re-solved at t = 1: {[round(x, 4) for x in replanned]}")
