import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from expectile_erp.risk import cvar
from expectile_erp.trinomial import (TrinomialTree, conditional_cvar, dynamic_cvar_value,
                                     evaluate_time_consistent_risk, implied_alpha_interval,
                                     optimality_violation, solve_conditional_cvar,
                                     solve_dynamic_cvar_hedge, solve_static_cvar_hedge,
                                     time_inconsistency_report)

TREE = TrinomialTree.example()


def test_tree_structure():
    leaves = TREE.leaves()
    assert len(leaves) == 9
    assert all(p == pytest.approx(1 / 9) for _, p, _, _ in leaves)
    assert [b for b, *_ in leaves] == [0, 0, 0, 1, 1, 1, 2, 2, 2]
    with pytest.raises(ValueError):
        TREE.branch(4)
    with pytest.raises(ValueError):
        TrinomialTree(100, [1, 2], [[1]], 100)


def _static_reference(tree, alpha):
    """The same variational problem handed to an independent LP solver."""
    rows, a = [], []
    for b0, p, s1, s2 in tree.leaves():
        g = np.zeros(4)
        g[0], g[1 + b0] = s1 - tree.s0, s2 - s1
        rows.append(g)
        a.append(max(s2 - tree.strike, 0.0))
    n = len(rows)
    cost = np.concatenate([np.zeros(4), [1.0], np.full(n, 1 / 9 / (1 - alpha))])
    A = np.hstack([-np.array(rows), -np.ones((n, 1)), -np.eye(n)])
    res = linprog(cost, A_ub=A, b_ub=-np.array(a),
                  bounds=[(None, None)] * 5 + [(0, None)] * n, method="highs")
    return res.fun, res.x[:4]


def test_static_hedge_values():
    st = solve_static_cvar_hedge(TREE, 0.6)
    assert st.xi0 == pytest.approx(0.9341, abs=1e-3)
    assert st.xi1 == pytest.approx([0.8718, 0.7665, 0.5000], abs=1e-3)
    assert st.risk == pytest.approx(26.36, abs=0.01)
    ref_val, ref_x = _static_reference(TREE, 0.6)
    assert st.risk == pytest.approx(ref_val, abs=1e-9)
    assert np.allclose(np.r_[st.xi0, st.xi1], ref_x, atol=1e-7)


def test_static_risk_is_cvar_of_the_hedged_losses():
    st = solve_static_cvar_hedge(TREE, 0.6)
    assert evaluate_time_consistent_risk(TREE, st.xi0, st.xi1, 0.6) == pytest.approx(st.risk, abs=1e-9)


def test_static_lp_certificates():
    st = solve_static_cvar_hedge(TREE, 0.6)
    lp = st.lp
    assert np.all(lp.slack_ub >= -1e-9)
    assert abs(lp.duals_ub @ lp.slack_ub) <= 1e-9


def test_static_alpha_zero_is_mean_minimization():
    st = solve_static_cvar_hedge(TREE, 0.0, bounds=(-1.0, 1.0))
    best = min(np.mean(np.concatenate(TREE.losses(x[0], x[1:])))
               for x in itertools.product((-1.0, 1.0), repeat=4))
    assert st.risk == pytest.approx(best, abs=1e-9)


def test_conditional_reoptimization():
    xi0 = 0.9341
    got = [solve_conditional_cvar(TREE, b, xi0, 0.6) for b in (1, 2, 3)]
    assert got == pytest.approx([0.8718, 0.6154, 0.3571], abs=1e-3)
    # the conditional argmin does not depend on the sunk position
    assert solve_conditional_cvar(TREE, 2, -3.0, 0.6) == pytest.approx(got[1], abs=1e-9)


def test_conditional_solution_minimizes_on_a_dense_grid():
    grid = np.linspace(-1, 2, 30001)
    for b in (1, 2, 3):
        x = solve_conditional_cvar(TREE, b, 0.0, 0.6)
        f = np.array([conditional_cvar(TREE, b, 0.0, g, 0.6) for g in grid[::10]])
        assert conditional_cvar(TREE, b, 0.0, x, 0.6) <= f.min() + 1e-9


def test_replanned_risk_and_underestimation():
    st = solve_static_cvar_hedge(TREE, 0.6)
    bar = [solve_conditional_cvar(TREE, b, st.xi0, 0.6) for b in (1, 2, 3)]
    rho = evaluate_time_consistent_risk(TREE, st.xi0, bar, 0.6)
    assert rho == pytest.approx(27.94, abs=0.01)
    assert (rho - st.risk) / st.risk == pytest.approx(0.06, abs=0.005)
    assert rho >= st.risk


def _grid_alpha_set(branch, xi, alphas):
    """Levels at which ``xi`` attains the dense-grid minimum of the branch problem."""
    grid = np.linspace(xi - 2, xi + 2, 801)
    out = []
    for a in alphas:
        f = np.array([conditional_cvar(TREE, branch, 0.0, g, a) for g in grid])
        if conditional_cvar(TREE, branch, 0.0, xi, a) <= f.min() + 1e-9:
            out.append(a)
    return np.array(out)


def test_implied_interval_branch_one():
    st = solve_static_cvar_hedge(TREE, 0.6)
    iv = implied_alpha_interval(TREE, 1, st.xi1[0])
    assert iv.lo == pytest.approx(0.4580, abs=5e-4)
    assert iv.hi == 1.0


def test_implied_interval_branch_two_is_a_single_level():
    st = solve_static_cvar_hedge(TREE, 0.6)
    iv = implied_alpha_interval(TREE, 2, st.xi1[1])
    assert iv.lo == pytest.approx(0.4580, abs=5e-4)
    assert iv.hi == pytest.approx(0.4585, abs=5e-4)
    assert iv.hi - iv.lo < 1e-3


def test_implied_interval_branch_three_matches_a_grid_oracle():
    st = solve_static_cvar_hedge(TREE, 0.6)
    iv = implied_alpha_interval(TREE, 3, st.xi1[2])
    members = _grid_alpha_set(3, st.xi1[2], np.linspace(0.01, 0.99, 50))
    assert members.size
    assert iv.lo <= members.min() + 5e-4 and iv.hi >= members.max() - 5e-4
    assert members.min() - 0.02 <= iv.lo and iv.hi <= members.max() + 0.02
    # below 0.2 the conditional problem has no minimizer at all
    assert optimality_violation(TREE, 3, st.xi1[2], 0.19) > 0


def test_implied_interval_empty_and_validation():
    iv = implied_alpha_interval(TREE, 1, -5.0)
    assert iv.empty and 0.5 not in iv
    with pytest.raises(ValueError):
        implied_alpha_interval(TREE, 1, 0.5, tol=0.0)


def _grid_dynamic_oracle(alpha, lo=-2.0, hi=3.0, n=10_000):
    """Dense grid over xi0, then the kink of the piecewise-linear value
    is recovered by intersecting the two lines through neighbouring nodes.

    A sunk first-stage position only shifts each branch loss by a constant,
    so the inner optima are solved once and translated along the grid.
    """
    xs = np.linspace(lo, hi, n)
    g0 = dynamic_cvar_value(TREE, 0.0, alpha)[1]
    dS0 = TREE.s1 - TREE.s0
    f = np.array([cvar(g0 - x * dS0, TREE.p1, alpha) for x in xs])
    k = int(np.argmin(f))
    best = f[k]
    if 2 <= k <= n - 3:
        sl = (f[k - 1] - f[k - 2]) / (xs[k - 1] - xs[k - 2])
        sr = (f[k + 2] - f[k + 1]) / (xs[k + 2] - xs[k + 1])
        if sl != sr:
            x = (f[k + 1] - f[k - 1] + sl * xs[k - 1] - sr * xs[k + 1]) / (sl - sr)
            best = min(best, dynamic_cvar_value(TREE, x, alpha)[0])
    return best


def test_dynamic_hedge_matches_grid_oracle():
    dyn = solve_dynamic_cvar_hedge(TREE, 0.6)
    assert dyn.risk == pytest.approx(_grid_dynamic_oracle(0.6), abs=1e-6)
    assert dyn.risk >= solve_static_cvar_hedge(TREE, 0.6).risk - 1e-9


def test_dynamic_hedge_is_time_consistent():
    dyn = solve_dynamic_cvar_hedge(TREE, 0.6)
    for b in (1, 2, 3):
        assert solve_conditional_cvar(TREE, b, dyn.xi0, 0.6) == pytest.approx(dyn.xi1[b - 1], abs=1e-6)


def test_dynamic_alpha_zero_is_nested_mean():
    dyn = solve_dynamic_cvar_hedge(TREE, 0.0, bounds=(-1.0, 1.0))
    best = min(np.mean([np.mean(l) for l in TREE.losses(x[0], x[1:])])
               for x in itertools.product((-1.0, 1.0), repeat=4))
    assert dyn.risk == pytest.approx(best, abs=1e-8)


def test_degenerate_tree_without_price_moves():
    flat = TrinomialTree(100.0, [100.0], [[100.0]], strike=90.0)
    assert solve_static_cvar_hedge(flat, 0.6).risk == pytest.approx(10.0)
    assert solve_dynamic_cvar_hedge(flat, 0.6).risk == pytest.approx(10.0)
    same = TrinomialTree(100.0, [110.0] * 3, [[120.0]] * 3, strike=100.0)
    # deterministic gains: the position is capped at one share by the bounds
    dyn = solve_dynamic_cvar_hedge(same, 0.5, bounds=(-1.0, 1.0))
    assert dyn.risk == pytest.approx(20.0 - 10.0 - 10.0)


def test_report_shape():
    rep = time_inconsistency_report()
    assert len(rep["branches"]) == 3
    assert rep["replanned_risk"] > rep["static_risk"]
    assert cvar([1.0], None, 0.6) == 1.0
