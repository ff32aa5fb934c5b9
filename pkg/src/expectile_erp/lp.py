"""Dense two-phase simplex for small linear programs (Bland's rule).

Problems are given as

    min c @ x  s.t.  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  lo <= x <= hi

and converted to standard form ``A z = b, z >= 0`` internally.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOL = 1e-10


class Infeasible(Exception):
    def __init__(self, certificate):
        super().__init__("linear program is infeasible")
        self.certificate = certificate


class Unbounded(Exception):
    pass


@dataclass
class LpProblem:
    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    bounds: list | None = None       # per variable (lo, hi); None means unbounded side

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A_ub = np.zeros((0, n)) if self.A_ub is None else np.atleast_2d(np.asarray(self.A_ub, float))
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, float).ravel()
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.atleast_2d(np.asarray(self.A_eq, float))
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, float).ravel()
        if self.bounds is None:
            self.bounds = [(0.0, None)] * n
        if (self.A_ub.shape != (self.b_ub.size, n) or self.A_eq.shape != (self.b_eq.size, n)
                or len(self.bounds) != n):
            raise ValueError("inconsistent LP dimensions")

    @property
    def n(self):
        return self.c.size


@dataclass
class LpResult:
    value: float
    x: np.ndarray
    duals_ub: np.ndarray        # >= 0 multipliers of the A_ub rows
    duals_eq: np.ndarray
    slack_ub: np.ndarray
    reduced_costs: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    iterations: int = 0


class _StandardForm:
    """x = offset + M @ z with z >= 0, and rows A z = b."""

    def __init__(self, prob):
        n = prob.n
        cols, offset = [], np.zeros(n)
        upper_rows = []
        for j, (lo, hi) in enumerate(prob.bounds):
            lo = -np.inf if lo is None else float(lo)
            hi = np.inf if hi is None else float(hi)
            if lo > hi:
                raise Infeasible(None)
            if np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    upper_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        M = np.zeros((n, len(cols)))
        for k, (j, s) in enumerate(cols):
            M[j, k] = s
        nz = len(cols)
        m_ub, m_eq, m_up = prob.b_ub.size, prob.b_eq.size, len(upper_rows)
        n_slack = m_ub + m_up
        A = np.zeros((m_ub + m_up + m_eq, nz + n_slack))
        b = np.zeros(A.shape[0])
        A[:m_ub, :nz] = prob.A_ub @ M
        b[:m_ub] = prob.b_ub - prob.A_ub @ offset
        for r, (k, ub) in enumerate(upper_rows):
            A[m_ub + r, k] = 1.0
            b[m_ub + r] = ub
        A[:n_slack, nz:nz + n_slack] = np.eye(n_slack)
        A[n_slack:, :nz] = prob.A_eq @ M
        b[n_slack:] = prob.b_eq - prob.A_eq @ offset
        self.sign = np.where(b < 0, -1.0, 1.0)
        self.A = A * self.sign[:, None]
        self.b = b * self.sign
        self.c = np.concatenate([prob.c @ M, np.zeros(n_slack)])
        self.const = float(prob.c @ offset)
        self.M, self.offset = M, offset
        self.nz, self.m_ub, self.m_up, self.m_eq = nz, m_ub, m_up, m_eq


def _pivot(T, r, k):
    T[r] /= T[r, k]
    col = T[:, k].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T, basis, n_cols, max_iter):
    """Simplex iterations on tableau ``T`` (last row = reduced costs)."""
    it = 0
    while it < max_iter:
        d = T[-1, :n_cols]
        enter = np.flatnonzero(d < -TOL)
        if enter.size == 0:
            return it
        k = enter[0]
        col = T[:-1, k]
        pos = col > TOL
        if not pos.any():
            raise Unbounded()
        ratios = np.where(pos, T[:-1, -1] / np.where(pos, col, 1.0), np.inf)
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + TOL * (1 + abs(best)))
        r = ties[np.argmin([basis[i] for i in ties])]
        _pivot(T, r, k)
        basis[r] = k
        it += 1
    raise RuntimeError("simplex iteration limit reached")


def solve_lp(prob, max_iter=10000):
    sf = _StandardForm(prob)
    A, b = sf.A, sf.b
    m, n = A.shape
    # phase one: artificials on every row
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    it = _run(T, basis, n + m, max_iter)
    if -T[-1, -1] > 1e-9 * (1 + np.abs(b).sum()):
        # Farkas vector y: y @ A <= 0, y @ b > 0 (standard-form rows)
        y = 1.0 - T[-1, n:n + m]
        raise Infeasible(y * sf.sign)
    # drive artificials out of the basis
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            nonzero = np.flatnonzero(np.abs(T[r, :n]) > 1e-9)
            if nonzero.size:
                _pivot(T, r, nonzero[0])
                basis[r] = nonzero[0]
            else:
                keep[r] = False      # redundant row
    rows = np.flatnonzero(keep)
    T2 = np.zeros((rows.size + 1, n + 1))
    T2[:-1, :n] = T[rows, :n]
    T2[:-1, -1] = T[rows, -1]
    basis = [basis[r] for r in rows]
    cB = sf.c[basis]
    T2[-1, :n] = sf.c - cB @ T2[:-1, :n]
    T2[-1, -1] = -cB @ T2[:-1, -1]
    it += _run(T2, basis, n, max_iter)

    z = np.zeros(n)
    z[basis] = T2[:-1, -1]
    # duals from the final basis: B^T y = c_B on the kept rows
    B = A[np.ix_(rows, basis)]
    y_kept = np.linalg.solve(B.T, sf.c[basis])
    y = np.zeros(m)
    y[rows] = y_kept
    reduced = sf.c - A.T @ y
    if np.any(reduced < -1e-8):
        raise RuntimeError("optimality certificate failed: negative reduced cost")
    y = y * sf.sign          # undo row flips
    x = sf.offset + sf.M @ z[:sf.nz]
    slack_ub = z[sf.nz:sf.nz + sf.m_ub]
    # standard-form duals y_i of ``A_ub x + s = b`` are <= 0 for a minimization
    return LpResult(value=float(sf.c @ z + sf.const), x=x,
                    duals_ub=-y[:sf.m_ub], duals_eq=y[sf.m_ub + sf.m_up:],
                    slack_ub=slack_ub, reduced_costs=reduced, z=z, iterations=it)
