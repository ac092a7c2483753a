"""Linear-program backends.

``solve_lp`` maximises nothing on its own: it minimises ``c @ x`` subject to
``A_ub x <= b_ub``, ``A_eq x = b_eq`` and ``lb <= x <= ub``.  Two backends
are available: ``"highs"`` (scipy) and ``"simplex"``, a dense two-phase
tableau simplex with Bland's anti-cycling rule.  The latter is slow but has
no moving parts and is used to cross-check the former on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    fun: float

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lb=None, ub=None,
             backend: str = "highs") -> LPResult:
    c = np.asarray(c, dtype=float)
    n = len(c)
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if backend == "highs":
        return _solve_highs(c, A_ub, b_ub, A_eq, b_eq, lb, ub)
    if backend == "simplex":
        return simplex(c, _dense(A_ub, n), b_ub, _dense(A_eq, n), b_eq, lb, ub)
    raise ValueError(f"unknown LP backend {backend!r}")


def _dense(A, n):
    if A is None:
        return np.zeros((0, n))
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def _solve_highs(c, A_ub, b_ub, A_eq, b_eq, lb, ub) -> LPResult:
    bounds = np.column_stack([lb, np.where(np.isinf(ub), np.nan, ub)])
    bounds = [(l, None if np.isnan(u) else u) for l, u in bounds]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs", options={"presolve": True})
    if res.status == 0:
        return LPResult(OPTIMAL, res.x, float(res.fun))
    if res.status == 2:
        return LPResult(INFEASIBLE, None, np.inf)
    if res.status == 3:
        return LPResult(UNBOUNDED, None, -np.inf)
    raise RuntimeError(f"HiGHS failed: {res.message}")


def simplex(c, A_ub, b_ub, A_eq, b_eq, lb, ub, tol: float = 1e-9,
            max_iter: int = 200_000) -> LPResult:
    """Two-phase tableau simplex with Bland's rule on a bounded-variable LP."""
    n = len(c)
    if np.any(np.isinf(lb)):
        raise ValueError("simplex backend needs finite lower bounds")
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    # shift x = lb + y, y >= 0
    b_ub = b_ub - A_ub @ lb
    b_eq = b_eq - A_eq @ lb
    fin = np.flatnonzero(np.isfinite(ub))
    if np.any(ub[fin] < lb[fin] - tol):
        return LPResult(INFEASIBLE, None, np.inf)
    rows_ub = [A_ub]
    rhs_ub = [b_ub]
    if len(fin):
        B = np.zeros((len(fin), n))
        B[np.arange(len(fin)), fin] = 1.0
        rows_ub.append(B)
        rhs_ub.append(ub[fin] - lb[fin])
    A_ub = np.vstack(rows_ub)
    b_ub = np.concatenate(rhs_ub)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    # standard form: [A_ub I; A_eq 0] [y; s] = b
    A = np.zeros((m_ub + m_eq, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    m, N = A.shape
    # phase I: artificial variable per row
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(N, N + m))
    T[m, :N] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    if not _pivot_loop(T, basis, N + m, tol, max_iter):
        raise RuntimeError("phase I did not terminate")
    if T[m, -1] < -1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
        return LPResult(INFEASIBLE, None, np.inf)
    # drive artificials out of the basis where possible
    for r in range(m):
        if basis[r] >= N:
            cols = np.flatnonzero(np.abs(T[r, :N]) > tol)
            if len(cols):
                _pivot(T, basis, r, int(cols[0]))
    keep = [r for r in range(m) if basis[r] < N]
    T2 = np.zeros((len(keep) + 1, N + 1))
    T2[:-1, :N] = T[keep, :N]
    T2[:-1, -1] = T[keep, -1]
    basis = [basis[r] for r in keep]
    cost = np.zeros(N)
    cost[:n] = c
    T2[-1, :N] = cost
    T2[-1, -1] = 0.0
    for r, j in enumerate(basis):
        if T2[-1, j] != 0:
            T2[-1] -= T2[-1, j] * T2[r]
    status = _pivot_loop(T2, basis, N, tol, max_iter)
    if status is None:
        return LPResult(UNBOUNDED, None, -np.inf)
    if not status:
        raise RuntimeError("phase II did not terminate")
    y = np.zeros(N)
    for r, j in enumerate(basis):
        y[j] = T2[r, -1]
    x = lb + y[:n]
    return LPResult(OPTIMAL, x, float(c @ x))


def _pivot(T, basis, r, j):
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = j


def _pivot_loop(T, basis, n_cols, tol, max_iter):
    """Bland's rule; returns True at optimum, None if unbounded, False on iteration cap."""
    m = T.shape[0] - 1
    for _ in range(max_iter):
        red = T[m, :n_cols]
        entering = np.flatnonzero(red < -tol)
        if len(entering) == 0:
            return True
        j = int(entering[0])
        col = T[:m, j]
        pos = col > tol
        if not pos.any():
            return None
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        r = min(ties, key=lambda k: basis[k])
        _pivot(T, basis, int(r), j)
    return False
