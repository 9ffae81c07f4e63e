"""Dense tableau simplex.

The core routine :func:`run_simplex` works on a tableau that is already in
canonical form with respect to a given basis.  :func:`linprog` is a small
front end for general LPs (inequalities, equalities, box bounds) that
builds such a tableau with artificial variables and runs both phases.

Pricing rules:

* ``bland``: lowest eligible index enters, lowest basic index leaves among
  ratio ties.  Cannot cycle, but takes many pivots on large tableaux.
* ``dantzig``: most negative reduced cost enters.  Fast, may cycle on
  degenerate problems.
* ``hybrid`` (default): Dantzig pricing until ``DEGENERATE_RUN`` degenerate
  pivots occur in a row, then Bland's rule for the rest of the run, so
  termination is still guaranteed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

PIVOT_TOL = 1e-11
COST_TOL = 1e-12
RATIO_RTOL = 1e-12
DEGENERATE_RUN = 50
RULES = ("bland", "dantzig", "hybrid")


@dataclass
class SimplexState:
    """Mutable tableau state.

    ``T`` holds the constraint rows with the right-hand side in its last
    column; ``basis[r]`` is the column basic in row ``r``.
    """

    T: np.ndarray
    basis: np.ndarray
    iterations: int = 0
    min_pivot: float = np.inf

    @property
    def n_cols(self) -> int:
        return self.T.shape[1] - 1

    @property
    def rhs(self) -> np.ndarray:
        return self.T[:, -1]

    def pivot(self, r: int, j: int):
        T = self.T
        p = T[r, j]
        self.min_pivot = min(self.min_pivot, abs(p))
        T[r] /= p
        col = T[:, j].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        if rows.size:
            T[rows] -= np.outer(col[rows], T[r])
        # keep the entering column an exact unit vector
        T[rows, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.iterations += 1

    def primal(self) -> np.ndarray:
        x = np.zeros(self.n_cols)
        x[self.basis] = self.rhs
        return x

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        return cost - cost[self.basis] @ self.T[:, :-1]


def run_simplex(state: SimplexState, cost: np.ndarray, *, eligible: Optional[np.ndarray] = None,
                rule: str = "hybrid", max_iter: int = 100_000, cost_tol: float = COST_TOL) -> str:
    """Minimize ``cost @ x`` from the canonical tableau in ``state``.

    Returns ``"optimal"``, ``"unbounded"`` or ``"iteration_limit"``.
    ``eligible`` masks the columns allowed to enter the basis.
    """
    if rule not in RULES:
        raise ValueError(f"unknown pivot rule {rule!r}; expected one of {RULES}")
    T = state.T
    z = state.reduced_costs(cost)
    bland = rule == "bland"
    degenerate = 0
    if eligible is None:
        eligible = np.ones(state.n_cols, dtype=bool)
    scale = max(1.0, float(np.max(np.abs(cost)))) if cost.size else 1.0
    thresh = -cost_tol * scale
    for _ in range(max_iter):
        cand = np.flatnonzero((z < thresh) & eligible)
        if cand.size == 0:
            return "optimal"
        j = int(cand[0]) if bland else int(cand[np.argmin(z[cand])])
        col = T[:, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + RATIO_RTOL * max(1.0, abs(best))]
        r = int(ties[np.argmin(state.basis[ties])])
        if rule == "hybrid" and not bland:
            degenerate = degenerate + 1 if best <= 0.0 else 0
            bland = degenerate >= DEGENERATE_RUN
        state.pivot(r, j)
        z -= z[j] * T[r, :-1]
        z[j] = 0.0
    return "iteration_limit"


def drive_out(state: SimplexState, artificial: np.ndarray,
              eligible: Optional[np.ndarray] = None) -> np.ndarray:
    """Pivot zero-valued artificial variables out of the basis.

    Rows whose eligible non-artificial part vanishes are redundant; their
    indices are returned so the caller can drop them.
    """
    blocked = artificial if eligible is None else artificial | ~eligible
    redundant = []
    for r in range(state.T.shape[0]):
        if not artificial[state.basis[r]]:
            continue
        row = np.abs(state.T[r, :-1])
        row[blocked] = 0.0
        j = int(np.argmax(row))
        if row[j] > PIVOT_TOL * 1e3:
            state.pivot(r, j)
        else:
            redundant.append(r)
    return np.array(redundant, dtype=np.int64)


def drop_rows(state: SimplexState, rows) -> np.ndarray:
    keep = np.ones(state.T.shape[0], dtype=bool)
    keep[list(rows)] = False
    state.T = state.T[keep]
    state.basis = state.basis[keep]
    return keep


@dataclass
class LPResult:
    x: Optional[np.ndarray]
    fun: float
    status: str
    iterations: int
    infeasibility: float = 0.0


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None, *,
            rule: str = "hybrid", feas_tol: float = 1e-9, max_iter: int = 100_000) -> LPResult:
    """Minimize ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq`` and bounds.

    ``bounds`` is a list of ``(lo, hi)`` pairs (``None`` for infinite); the
    default is ``x >= 0``.  Status is one of ``optimal``, ``infeasible``,
    ``unbounded`` or ``iteration_limit``.
    """
    c = np.asarray(c, dtype=float)
    nv = c.size
    A_ub = np.zeros((0, nv)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    A_eq = np.zeros((0, nv)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    if bounds is None:
        bounds = [(0.0, None)] * nv

    # x = shift + S y with y >= 0; extra rows for finite upper bounds
    shift = np.zeros(nv)
    cols = []          # (original var, sign) per standard column
    extra_ub = []      # (standard column, bound)
    for k, (lo, hi) in enumerate(bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            return LPResult(None, np.nan, "infeasible", 0, lo - hi)
        if np.isfinite(lo):
            shift[k] = lo
            cols.append((k, 1.0))
            if np.isfinite(hi):
                extra_ub.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[k] = hi
            cols.append((k, -1.0))
        else:
            cols.append((k, 1.0))
            cols.append((k, -1.0))
    S = np.zeros((nv, len(cols)))
    for q, (k, s) in enumerate(cols):
        S[k, q] = s
    ny = len(cols)

    Aub = A_ub @ S
    bub = b_ub - A_ub @ shift
    if extra_ub:
        E = np.zeros((len(extra_ub), ny))
        for r, (q, u) in enumerate(extra_ub):
            E[r, q] = 1.0
        Aub = np.vstack([Aub, E])
        bub = np.concatenate([bub, [u for _, u in extra_ub]])
    Aeq = A_eq @ S
    beq = b_eq - A_eq @ shift

    n_ub, n_eq = Aub.shape[0], Aeq.shape[0]
    rows = n_ub + n_eq
    # columns: y | slacks | artificials
    A = np.zeros((rows, ny + n_ub))
    A[:n_ub, :ny] = Aub
    A[:n_ub, ny:] = np.eye(n_ub)
    A[n_ub:, :ny] = Aeq
    b = np.concatenate([bub, beq])
    neg = b < 0
    A[neg] *= -1
    b = np.abs(b)
    need_art = np.ones(rows, dtype=bool)
    need_art[:n_ub] = neg[:n_ub]
    art_rows = np.flatnonzero(need_art)
    n_art = art_rows.size
    ncols = ny + n_ub + n_art
    T = np.zeros((rows, ncols + 1))
    T[:, : ny + n_ub] = A
    T[art_rows, ny + n_ub + np.arange(n_art)] = 1.0
    T[:, -1] = b
    basis = np.empty(rows, dtype=np.int64)
    basis[:n_ub] = ny + np.arange(n_ub)
    basis[art_rows] = ny + n_ub + np.arange(n_art)
    state = SimplexState(T, basis)
    artificial = np.zeros(ncols, dtype=bool)
    artificial[ny + n_ub:] = True

    if n_art:
        status = run_simplex(state, artificial.astype(float), rule=rule, max_iter=max_iter)
        if status == "iteration_limit":
            return LPResult(None, np.nan, status, state.iterations)
        infeas = float(state.rhs[artificial[state.basis]].sum())
        if infeas > feas_tol * (1.0 + float(np.abs(b).max(initial=0.0))):
            return LPResult(None, np.nan, "infeasible", state.iterations, infeas)
        redundant = drive_out(state, artificial)
        if redundant.size:
            drop_rows(state, redundant)
    cost = np.zeros(ncols)
    cost[:ny] = S.T @ c
    status = run_simplex(state, cost, eligible=~artificial, rule=rule, max_iter=max_iter)
    if status != "optimal":
        return LPResult(None, np.nan, status, state.iterations)
    y = state.primal()[:ny]
    x = shift + S @ y
    return LPResult(x, float(c @ x), "optimal", state.iterations)
