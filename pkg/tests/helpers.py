"""Oracles and finite-difference utilities shared across test modules."""
import itertools

import numpy as np

from expectile_erp.mdp import terminal_liability
from expectile_erp.risk import ScenarioTree, expectile, expectile_objective, nested_expectile


def grad_close(analytic, numeric, rel=1e-4, abs_floor=1e-9):
    """Elementwise relative agreement with a tiny absolute floor for near-zero entries."""
    a, n = np.asarray(analytic, float), np.asarray(numeric, float)
    scale = np.maximum(np.abs(a), np.abs(n))
    return bool(np.all(np.abs(a - n) <= rel * scale + abs_floor)), float(
        np.max(np.abs(a - n) / np.maximum(scale, abs_floor / rel)))


def fd_params(f, params, h=1e-5):
    """Central differences of scalar ``f()`` with respect to every entry of ``params``."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            fp = f()
            p[i] = old - h
            fm = f()
            p[i] = old
            g[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def fd_input(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def random_dist(rng, n=None):
    n = n or int(rng.integers(1, 12))
    x = rng.normal(0.0, rng.uniform(0.1, 10.0), n) + rng.normal(0, 5)
    p = rng.uniform(0.05, 1.0, n)
    return x, p / p.sum()


def score_argmin(x, p, tau):
    """Direct minimizer of the asymmetric squared score.

    Between consecutive atoms the score is an ordinary quadratic in q, so
    each piece is minimized in closed form and the best piece wins.
    """
    xs = np.unique(x)
    best_q, best_f = xs[0], expectile_objective(xs[0], x, p, tau)
    for lo, hi in zip(xs[:-1], xs[1:]):
        above = x >= hi
        w = np.where(above, tau, 1 - tau) * p
        q = np.clip(w @ x / w.sum(), lo, hi)
        f = expectile_objective(q, x, p, tau)
        if f < best_f:
            best_q, best_f = q, f
    return best_q


def _one_step_min(a, b, tau):
    """min over xi in [-1, 1] of expectile(a - xi b) by kink enumeration.

    For a fixed set of atoms above the expectile it is affine in xi, so the
    convex piecewise-linear minimum sits at a bound or at a point where an
    atom meets the affine piece of some sign pattern.
    """
    cands = [-1.0, 1.0]
    for pattern in itertools.product([tau, 1 - tau], repeat=len(a)):
        w = np.array(pattern)
        alpha, beta = w @ a / w.sum(), w @ b / w.sum()
        for aj, bj in zip(a, b):
            if abs(bj - beta) > 1e-15:
                xi = (aj - alpha) / (bj - beta)
                if -1.0 <= xi <= 1.0:
                    cands.append(xi)
    vals = [expectile(a - xi * b, None, tau, tol=1e-15) for xi in cands]
    k = int(np.argmin(vals))
    return cands[k], vals[k]


def nested_hedge_oracle(s0, atoms, contract, tau, side):
    kids = []
    x = np.log(s0)
    for r1 in atoms:
        s1 = np.exp(x + r1)
        s2 = np.exp(x + r1 + atoms)
        lia = terminal_liability(contract, s2[:, None], side)
        dS = s1 * np.expm1(atoms)
        xi1, _ = _one_step_min(lia, dS, tau)
        kids.append((s1, xi1, lia - xi1 * dS))
    v1 = np.array([nested_expectile(ScenarioTree(1.0, None, [ScenarioTree(1 / 3, float(v))
                                                            for v in leaf]), tau)
                   for _, _, leaf in kids])
    dS0 = s0 * np.expm1(atoms)
    xi0, _ = _one_step_min(v1, dS0, tau)
    tree = ScenarioTree(1.0, None, [
        ScenarioTree(1 / 3, None, [ScenarioTree(1 / 3, float(v - xi0 * d)) for v in leaf])
        for (_, _, leaf), d in zip(kids, dS0)])
    return nested_expectile(tree, tau), xi0
