"""Two-stage trinomial hedging example with CVaR objectives.

A writer of an at-the-money call holds ``xi0`` shares from time 0 to 1 and
``xi1[b]`` shares from time 1 to 2 in branch ``b``. The terminal loss is

    L = F(S2) - xi0 (S1 - S0) - xi1[b] (S2 - S1).

Three problems are solved exactly as small LPs through the variational
form CVaR_a(L) = min_c c + E[(L - c)+] / (1 - a):

* the static hedge minimizing CVaR of L over (xi0, xi1),
* the conditional re-optimization of xi1 in one branch with xi0 sunk,
* the nested ("dynamic") criterion CVaR(CVaR(L | branch)).

Branches are numbered from 1 in the public functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import LpProblem, solve_lp
from .risk import cvar


@dataclass
class TrinomialTree:
    s0: float
    s1: np.ndarray                  # (B,) prices at time 1
    s2: list                        # B arrays of time-2 prices
    strike: float
    p1: np.ndarray | None = None    # branch probabilities
    p2: list | None = None          # conditional leaf probabilities

    def __post_init__(self):
        self.s1 = np.asarray(self.s1, dtype=float).ravel()
        self.s2 = [np.asarray(s, dtype=float).ravel() for s in self.s2]
        B = self.s1.size
        if len(self.s2) != B or B == 0 or any(s.size == 0 for s in self.s2):
            raise ValueError("need one non-empty leaf array per branch")
        self.p1 = np.full(B, 1.0 / B) if self.p1 is None else np.asarray(self.p1, float)
        if self.p2 is None:
            self.p2 = [np.full(s.size, 1.0 / s.size) for s in self.s2]
        else:
            self.p2 = [np.asarray(p, dtype=float) for p in self.p2]
        probs = [self.p1] + self.p2
        if any(np.any(p <= 0) for p in probs) or not np.isclose(self.p1.sum(), 1.0) \
                or any(not np.isclose(p.sum(), 1.0) for p in self.p2) \
                or any(p.shape != s.shape for p, s in zip(self.p2, self.s2)):
            raise ValueError("probabilities must be positive and sum to one")

    @classmethod
    def example(cls):
        """The nine-leaf equiprobable tree with S0 = K = 100."""
        return cls(100.0, [150.0, 100.0, 80.0],
                   [[270.0, 150.0, 75.0], [180.0, 100.0, 50.0], [120.0, 80.0, 64.0]],
                   strike=100.0)

    @property
    def n_branches(self):
        return self.s1.size

    def branch(self, b):
        if not 1 <= b <= self.n_branches:
            raise ValueError(f"branch must lie in 1..{self.n_branches}, got {b}")
        return b - 1

    def payoff(self, b0):
        return np.maximum(self.s2[b0] - self.strike, 0.0)

    def leaves(self):
        """(branch index, unconditional probability, S1, S2) for every leaf."""
        out = []
        for b0 in range(self.n_branches):
            for s, q in zip(self.s2[b0], self.p2[b0]):
                out.append((b0, self.p1[b0] * q, self.s1[b0], s))
        return out

    def losses(self, xi0, xi1):
        """Terminal loss per leaf, grouped by branch."""
        xi1 = np.broadcast_to(np.asarray(xi1, dtype=float), (self.n_branches,))
        return [self.payoff(b) - xi0 * (self.s1[b] - self.s0) - xi1[b] * (self.s2[b] - self.s1[b])
                for b in range(self.n_branches)]

    def to_dict(self):
        return {"s0": self.s0, "s1": self.s1.tolist(), "s2": [s.tolist() for s in self.s2],
                "strike": self.strike, "p1": self.p1.tolist(),
                "p2": [p.tolist() for p in self.p2]}


def _check_alpha(alpha):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


def _cvar_lp(a, G, p, alpha, bounds=None):
    """min over d of CVaR_alpha of the losses a_i - G_i . d.

    Variables are (d, c, e_1..e_n) with e_i >= a_i - G_i d - c and e_i >= 0.
    ``bounds`` is a (lo, hi) pair applied to every component of d.
    """
    a = np.asarray(a, dtype=float)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n, k = G.shape
    cost = np.concatenate([np.zeros(k), [1.0], p / (1.0 - alpha)])
    A = np.hstack([-G, -np.ones((n, 1)), -np.eye(n)])
    dbound = (None, None) if bounds is None else tuple(bounds)
    res = solve_lp(LpProblem(cost, A, -a, bounds=[dbound] * k + [(None, None)] + [(0.0, None)] * n))
    return res.value, res.x[:k], res


@dataclass
class StaticHedge:
    xi0: float
    xi1: np.ndarray
    risk: float
    lp: object = field(default=None, repr=False)


def solve_static_cvar_hedge(tree, alpha, bounds=None):
    """Globally optimal static CVaR hedge (xi0, xi1 per branch)."""
    _check_alpha(alpha)
    B = tree.n_branches
    a, G, p = [], [], []
    for b0, prob, s1, s2 in tree.leaves():
        row = np.zeros(B + 1)
        row[0] = s1 - tree.s0
        row[1 + b0] = s2 - s1
        a.append(max(s2 - tree.strike, 0.0))
        G.append(row)
        p.append(prob)
    value, d, res = _cvar_lp(a, G, np.asarray(p), alpha, bounds)
    return StaticHedge(float(d[0]), d[1:].copy(), float(value), res)


def conditional_cvar(tree, branch, xi0, xi1, alpha):
    """CVaR_alpha of the loss in one branch for given positions."""
    b0 = tree.branch(branch)
    loss = (tree.payoff(b0) - xi0 * (tree.s1[b0] - tree.s0)
            - xi1 * (tree.s2[b0] - tree.s1[b0]))
    return cvar(loss, tree.p2[b0], alpha)


def _solve_conditional(tree, b0, xi0, alpha, bounds):
    a = tree.payoff(b0) - xi0 * (tree.s1[b0] - tree.s0)
    G = (tree.s2[b0] - tree.s1[b0])[:, None]
    value, d, _ = _cvar_lp(a, G, tree.p2[b0], alpha, bounds)
    return float(value), float(d[0])


def solve_conditional_cvar(tree, branch, xi0, alpha, bounds=None):
    """Re-optimized time-1 position in ``branch`` with ``xi0`` sunk."""
    _check_alpha(alpha)
    return _solve_conditional(tree, tree.branch(branch), xi0, alpha, bounds)[1]


def evaluate_time_consistent_risk(tree, xi0, xi1_bar, alpha):
    """Static CVaR at time 0 of the loss under (xi0, xi1_bar)."""
    _check_alpha(alpha)
    losses = np.concatenate(tree.losses(xi0, xi1_bar))
    probs = np.concatenate([tree.p1[b] * tree.p2[b] for b in range(tree.n_branches)])
    return cvar(losses, probs, alpha)


# -- implied risk aversion ----------------------------------------------------

@dataclass
class AlphaInterval:
    lo: float | None
    hi: float | None

    @property
    def empty(self):
        return self.lo is None

    def __contains__(self, alpha):
        return not self.empty and self.lo <= alpha <= self.hi


def optimality_violation(tree, branch, xi1, alpha, h=1e-7):
    """How far ``xi1`` is from minimizing the branch CVaR at level ``alpha``.

    The objective is convex and piecewise linear in xi1, so xi1 is optimal
    exactly when the left slope is <= 0 <= the right slope. Returns the
    positive part of the violated slope condition (0 for a minimizer).
    """
    f = lambda x: conditional_cvar(tree, branch, 0.0, x, alpha)
    f0 = f(xi1)
    right = (f(xi1 + h) - f0) / h
    left = (f0 - f(xi1 - h)) / h
    scale = 1e-6 * (1.0 + np.max(np.abs(tree.s2[tree.branch(branch)])))
    return max(left - scale, 0.0) + max(-right - scale, 0.0)


def implied_alpha_interval(tree, branch, xi1_star, tol=5e-4, n_scan=400):
    """Set of levels alpha at which ``xi1_star`` solves the conditional problem.

    The set is located by a scan over [tol, 1 - tol], a golden-section
    refinement of the smallest optimality violation, and bisection of both
    endpoints outward from a member point. An upper endpoint reaching
    1 - tol is reported as 1.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    tree.branch(branch)
    viol = lambda a: optimality_violation(tree, branch, xi1_star, a)
    member = lambda a: viol(a) == 0.0
    lo_a, hi_a = tol, 1.0 - tol
    grid = np.linspace(lo_a, hi_a, n_scan)
    v = np.array([viol(a) for a in grid])
    k = int(np.argmin(v))
    if v[k] == 0.0:
        start = grid[k]
    else:
        a = grid[max(k - 1, 0)]
        b = grid[min(k + 1, n_scan - 1)]
        g = (np.sqrt(5.0) - 1.0) / 2.0
        c, d = b - g * (b - a), a + g * (b - a)
        fc, fd = viol(c), viol(d)
        while b - a > 1e-12:
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - g * (b - a)
                fc = viol(c)
            else:
                a, c, fc = c, d, fd
                d = a + g * (b - a)
                fd = viol(d)
        start = min((a, b, c, d, 0.5 * (a + b)), key=viol)
        if not member(start):
            return AlphaInterval(None, None)

    def edge(inside, outside):
        while abs(outside - inside) > tol / 16:
            mid = 0.5 * (inside + outside)
            if member(mid):
                inside = mid
            else:
                outside = mid
        return inside

    # walk outward along the scan grid to bracket each endpoint
    above = grid[grid > start]
    out_hi = next((a for a in above if not member(a)), None)
    hi = hi_a if out_hi is None else edge(start, out_hi)
    below = grid[grid < start][::-1]
    out_lo = next((a for a in below if not member(a)), None)
    lo = lo_a if out_lo is None else edge(start, out_lo)
    if hi >= hi_a - tol:
        hi = 1.0
    return AlphaInterval(float(lo), float(hi))


# -- nested criterion ---------------------------------------------------------

@dataclass
class DynamicHedge:
    xi0: float
    xi1: np.ndarray
    risk: float
    branch_risks: np.ndarray


def dynamic_cvar_value(tree, xi0, alpha, bounds=None):
    """Outer CVaR over branches of the optimal conditional CVaRs, given xi0."""
    inner = [_solve_conditional(tree, b, xi0, alpha, bounds) for b in range(tree.n_branches)]
    vals = np.array([v for v, _ in inner])
    return cvar(vals, tree.p1, alpha), vals, np.array([x for _, x in inner])


def solve_dynamic_cvar_hedge(tree, alpha, bounds=None, search=(-10.0, 10.0), xtol=1e-10):
    """Backward induction for the nested CVaR criterion.

    Each branch problem is an LP in xi1 for fixed xi0; the outer value is
    convex and piecewise linear in xi0 and is minimized by golden-section
    search over ``search`` (intersected with ``bounds``).
    """
    _check_alpha(alpha)
    a, b = search
    if bounds is not None:
        a, b = max(a, bounds[0]), min(b, bounds[1])
    f = lambda x: dynamic_cvar_value(tree, x, alpha, bounds)[0]
    g = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    lo, hi = search if bounds is None else (max(search[0], bounds[0]),
                                            min(search[1], bounds[1]))
    xi0 = min((0.5 * (a + b), lo, hi), key=f)
    risk, vals, xi1 = dynamic_cvar_value(tree, xi0, alpha, bounds)
    return DynamicHedge(float(xi0), xi1, float(risk), vals)


# -- summary ------------------------------------------------------------------

def time_inconsistency_report(tree=None, alpha=0.6, tol=5e-4):
    """Static hedge, replanned hedge, implied levels and the nested optimum."""
    tree = TrinomialTree.example() if tree is None else tree
    st = solve_static_cvar_hedge(tree, alpha)
    branches = []
    xi_bar = np.empty(tree.n_branches)
    for b in range(1, tree.n_branches + 1):
        xi_bar[b - 1] = solve_conditional_cvar(tree, b, st.xi0, alpha)
        iv = implied_alpha_interval(tree, b, st.xi1[b - 1], tol)
        branches.append({"branch": b, "s1": float(tree.s1[b - 1]),
                         "xi1_static": float(st.xi1[b - 1]),
                         "xi1_replanned": float(xi_bar[b - 1]),
                         "implied_alpha": None if iv.empty else [iv.lo, iv.hi]})
    replanned = evaluate_time_consistent_risk(tree, st.xi0, xi_bar, alpha)
    dyn = solve_dynamic_cvar_hedge(tree, alpha)
    return {"alpha": alpha, "xi0_static": st.xi0, "static_risk": st.risk,
            "replanned_risk": replanned,
            "underestimation": (replanned - st.risk) / st.risk,
            "branches": branches,
            "dynamic": {"xi0": dyn.xi0, "xi1": dyn.xi1.tolist(), "risk": dyn.risk}}


def format_report(rep):
    lines = [f"alpha = {rep['alpha']:.4f}   static xi0 = {rep['xi0_static']:.4f}",
             f"{'branch':>6} {'S1':>7} {'xi1*':>8} {'xi1_bar':>8}  implied alpha"]
    for b in rep["branches"]:
        iv = b["implied_alpha"]
        ivs = "empty" if iv is None else f"[{iv[0]:.4f}, {iv[1]:.4f}]"
        lines.append(f"{b['branch']:>6} {b['s1']:>7.1f} {b['xi1_static']:>8.4f} "
                     f"{b['xi1_replanned']:>8.4f}  {ivs}")
    lines.append(f"static optimum      {rep['static_risk']:.4f}")
    lines.append(f"replanned risk      {rep['replanned_risk']:.4f}  "
                 f"(+{100 * rep['underestimation']:.2f}%)")
    d = rep["dynamic"]
    lines.append(f"nested optimum      {d['risk']:.4f}  at xi0 = {d['xi0']:.4f}")
    return "\n".join(lines)
