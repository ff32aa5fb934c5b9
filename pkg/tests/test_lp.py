import numpy as np
import pytest
from scipy.optimize import linprog

from expectile_erp.lp import Infeasible, LpProblem, Unbounded, solve_lp


def test_single_lower_bound():
    res = solve_lp(LpProblem([1.0], A_ub=[[-1.0]], b_ub=[-3.0], bounds=[(None, None)]))
    assert res.value == pytest.approx(3.0)
    assert res.x == pytest.approx([3.0])


def test_infeasible_pair_has_farkas_certificate():
    A = np.array([[1.0], [-1.0]])
    b = np.array([0.0, -1.0])
    with pytest.raises(Infeasible) as info:
        solve_lp(LpProblem([1.0], A_ub=A, b_ub=b, bounds=[(None, None)]))
    # nonnegative row multipliers u with u A = 0 and u b < 0
    u = -info.value.certificate
    assert np.all(u >= -1e-12)
    assert np.allclose(u @ A, 0.0)
    assert u @ b < 0


def test_unbounded():
    with pytest.raises(Unbounded):
        solve_lp(LpProblem([-1.0], bounds=[(None, None)]))
    with pytest.raises(Unbounded):
        solve_lp(LpProblem([-1.0], bounds=[(0.0, None)]))


def test_dimension_check():
    with pytest.raises(ValueError):
        LpProblem([1.0, 2.0], A_ub=[[1.0]], b_ub=[1.0])


def _random_problem(rng):
    n, m_ub, m_eq = int(rng.integers(1, 7)), int(rng.integers(0, 7)), int(rng.integers(0, 3))
    c = rng.normal(size=n)
    A = rng.normal(size=(m_ub, n))
    b = rng.normal(size=m_ub) + 1.0
    Ae = rng.normal(size=(m_eq, n))
    be = rng.normal(size=m_eq)
    bounds = [(rng.choice([None, -1.0, 0.0]), rng.choice([None, 2.0])) for _ in range(n)]
    return c, A, b, Ae, be, bounds


def test_agrees_with_reference_solver_on_random_problems():
    rng = np.random.default_rng(1)
    solved = 0
    for _ in range(300):
        c, A, b, Ae, be, bounds = _random_problem(rng)
        ref = linprog(c, A_ub=A if len(b) else None, b_ub=b if len(b) else None,
                      A_eq=Ae if len(be) else None, b_eq=be if len(be) else None,
                      bounds=bounds, method="highs")
        prob = LpProblem(c, A if len(b) else None, b if len(b) else None,
                         Ae if len(be) else None, be if len(be) else None, bounds)
        try:
            res = solve_lp(prob)
            status = 0
        except Infeasible:
            status = 2
        except Unbounded:
            status = 3
        assert status == ref.status
        if status:
            continue
        solved += 1
        assert res.value == pytest.approx(ref.fun, abs=1e-8)
        # primal feasibility
        if len(b):
            assert np.all(A @ res.x <= b + 1e-9)
            # dual feasibility and complementary slackness
            assert np.all(res.duals_ub >= -1e-12)
            assert abs(res.duals_ub @ res.slack_ub) <= 1e-9
            assert np.allclose(res.slack_ub, b - A @ res.x, atol=1e-9)
        if len(be):
            assert np.allclose(Ae @ res.x, be, atol=1e-9)
        lo = np.array([-np.inf if l is None else l for l, _ in bounds])
        hi = np.array([np.inf if h is None else h for _, h in bounds])
        assert np.all(res.x >= lo - 1e-9) and np.all(res.x <= hi + 1e-9)
    assert solved > 50


def test_degenerate_problem_terminates():
    # many redundant constraints through the optimum invite cycling
    A = np.array([[1, 1], [1, 2], [2, 1], [1, 1], [3, 3]], dtype=float)
    b = np.array([1, 1.5, 1.5, 1, 3])
    res = solve_lp(LpProblem([-1.0, -1.0], A, b))
    assert res.value == pytest.approx(-1.0)


def test_equality_duals_match_reference():
    res = solve_lp(LpProblem([1.0, 2.0, 3.0], A_eq=[[1, 1, 1]], b_eq=[2.0]))
    ref = linprog([1, 2, 3], A_eq=[[1, 1, 1]], b_eq=[2.0], method="highs")
    assert res.value == pytest.approx(2.0)
    assert res.duals_eq == pytest.approx(ref.eqlin.marginals)
