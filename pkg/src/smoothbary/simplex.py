"""Dense two-phase tableau simplex for small equality-form linear programs.

Solves ``min c @ x`` subject to ``A @ x = b``, ``x >= 0``. Bland's rule keeps
the pivoting finite on degenerate problems; all comparisons use a fixed
feasibility tolerance. Meant for the tiny transport LPs used as oracles, not
as a general solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LPResult", "solve_lp"]

TOL = 1e-9


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    value: float
    status: str
    pivots: int


def _pivot(T: np.ndarray, basis: list, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = c


def _run(T: np.ndarray, basis: list, ncols: int, max_pivots: int) -> tuple:
    """Minimize the objective stored in the last row over the first ``ncols`` columns."""
    pivots = 0
    while True:
        obj = T[-1, :ncols]
        entering = np.flatnonzero(obj < -TOL)
        if entering.size == 0:
            return "optimal", pivots
        c = int(entering[0])
        col = T[:-1, c]
        rhs = T[:-1, -1]
        rows = np.flatnonzero(col > TOL)
        if rows.size == 0:
            return "unbounded", pivots
        ratios = rhs[rows] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + TOL * max(1.0, abs(best))]
        # Bland: among tied rows leave the basic variable with the smallest index
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, basis, r, c)
        pivots += 1
        if pivots > max_pivots:
            return "pivot limit", pivots


def solve_lp(c, A_eq, b_eq, max_pivots: int = 100000) -> LPResult:
    """Solve ``min c @ x`` s.t. ``A_eq @ x = b_eq``, ``x >= 0``.

    Returns:
        An ``LPResult`` whose ``status`` is ``"optimal"``, ``"infeasible"``,
        ``"unbounded"`` or ``"pivot limit"``.
    """
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase 1: artificial columns n..n+m-1
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    status, p1 = _run(T, basis, n + m, max_pivots)
    if status != "optimal" or -T[-1, -1] > TOL * max(1.0, b.sum()) * 10:
        return LPResult(np.full(n, np.nan), np.nan, "infeasible", p1)
    # drive remaining artificials out of the basis, dropping redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            nz = np.flatnonzero(np.abs(T[r, :n]) > TOL)
            if nz.size:
                _pivot(T, basis, r, int(nz[0]))
                keep.append(r)
        else:
            keep.append(r)
    rows = keep + [m]
    T = np.hstack([T[rows][:, :n], T[rows][:, -1:]])
    basis = [basis[r] for r in keep]
    # phase 2 objective row in reduced form
    T[-1] = 0.0
    T[-1, :n] = c
    for r, j in enumerate(basis):
        T[-1] -= c[j] * T[r]
    status, p2 = _run(T, basis, n, max_pivots)
    x = np.zeros(n)
    for r, j in enumerate(basis):
        x[j] = T[r, -1]
    x[np.abs(x) < TOL] = 0.0
    return LPResult(x, float(c @ x), status, p1 + p2)
