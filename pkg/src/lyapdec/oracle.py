"""Exact LP oracle for the discretized primal problem.

Variables are the cell weights ``theta[c, i] >= 0`` (flattened cell-major,
column ``c * m + i``).  Rows are the ``n`` moment equations
``sum_c measure_c sum_i theta[c, i] f_i(x_c) = alpha`` followed by one
simplex row ``sum_i theta[c, i] = 1`` per cell.

The solver starts from a crash basis holding one weight per cell, so only
the moment rows need artificial variables.  Each moment row gets a pair of
opposite-signed artificials, which makes the phase-1 optimum exactly the
l1 distance from alpha to the reachable moment set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .family import FunctionFamily, MomentTarget, RelaxedDensity, SampledDomain, check_shapes
from .fields import as_field
from .simplex import SimplexState, drive_out, drop_rows, run_simplex

FEAS_TOL = 1e-9
FRACTIONAL_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteLP:
    """``cost[c, i] = measure_c v_i(x_c)``, ``coef[c, i, :] = measure_c f_i(x_c)``."""

    cost: np.ndarray
    coef: np.ndarray
    alpha: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.cost.shape[0]

    @property
    def m(self) -> int:
        return self.cost.shape[1]

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_rows(self) -> int:
        return self.n + self.n_cells

    @property
    def n_vars(self) -> int:
        return self.m * self.n_cells

    def dense(self):
        """Return ``(A_eq, b_eq, c)`` of the standard-form problem."""
        C, m, n = self.n_cells, self.m, self.n
        A = np.zeros((n + C, m * C))
        A[:n] = self.coef.reshape(C * m, n).T
        A[n + np.repeat(np.arange(C), m), np.arange(C * m)] = 1.0
        b = np.concatenate([self.alpha, np.ones(C)])
        return A, b, self.cost.ravel().copy()

    def objective(self, theta) -> float:
        return float(np.sum(self.cost * _weights(theta)))

    def moment(self, theta) -> np.ndarray:
        return np.einsum("ci,cin->n", _weights(theta), self.coef)

    def residual(self, theta) -> np.ndarray:
        return self.moment(theta) - self.alpha


def _weights(theta):
    return theta.weights if isinstance(theta, RelaxedDensity) else np.asarray(theta, dtype=float)


def build_discrete_lp(family: FunctionFamily, target: MomentTarget, field, dom: SampledDomain) -> DiscreteLP:
    field = as_field(field)
    check_shapes(family, dom, target=target, field=field)
    mu = dom.measures
    cost = mu[:, None] * field.values
    coef = mu[:, None, None] * family.values
    return DiscreteLP(cost, coef, target.alpha.copy())


@dataclass(frozen=True)
class ReducedLP:
    """The problem after eliminating the last weight of every cell.

    Minimize ``const + sum cost * t`` over ``t[c, i] >= 0`` (``i < m - 1``)
    with ``sum_i t[c, i] <= 1`` per cell and ``sum coef * t = rhs``.
    """

    cost: np.ndarray
    const: float
    coef: np.ndarray
    rhs: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.rhs.shape[0] + self.cost.shape[0]

    @property
    def n_vars(self) -> int:
        return self.cost.size

    def objective(self, t) -> float:
        return self.const + float(np.sum(self.cost * t))

    def is_feasible(self, t, tol: float = 1e-10) -> bool:
        t = np.asarray(t, dtype=float)
        moment_ok = np.linalg.norm(np.einsum("ci,cin->n", t, self.coef) - self.rhs) <= tol * (
            1 + np.linalg.norm(self.rhs))
        return bool(moment_ok and np.all(t >= -tol) and np.all(t.sum(axis=1) <= 1 + tol))


def reduce_lp(lp: DiscreteLP) -> ReducedLP:
    last_cost = lp.cost[:, -1]
    last_coef = lp.coef[:, -1, :]
    return ReducedLP(
        cost=lp.cost[:, :-1] - last_cost[:, None],
        const=float(last_cost.sum()),
        coef=lp.coef[:, :-1, :] - last_coef[:, None, :],
        rhs=lp.alpha - last_coef.sum(axis=0),
    )


def reduce_theta(theta) -> np.ndarray:
    return _weights(theta)[:, :-1].copy()


def lift_theta(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.hstack([t, 1.0 - t.sum(axis=1, keepdims=True)])


@dataclass(frozen=True)
class OracleSolution:
    theta: Optional[RelaxedDensity]
    objective_value: float
    status: str
    fractional_cells: int
    iterations: int = 0
    infeasibility: float = 0.0

    @property
    def basis_report(self) -> int:
        return self.fractional_cells


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    distance: float
    iterations: int

    def __bool__(self):
        return self.feasible


def fractional_cells(weights, tol: float = FRACTIONAL_TOL) -> np.ndarray:
    """Indices of cells whose weight vector is not a simplex vertex."""
    w = _weights(weights)
    return np.flatnonzero(w.max(axis=1) < 1.0 - tol)


class _Tableau:
    """Crash-started tableau for a :class:`DiscreteLP`."""

    def __init__(self, lp: DiscreteLP, crash: np.ndarray, allowed: Optional[np.ndarray] = None):
        C, m, n = lp.n_cells, lp.m, lp.n
        self.lp = lp
        M = lp.coef.reshape(C * m, n).T.copy()          # moment rows, (n, C*m)
        scale = np.abs(M).max(axis=1)
        scale[scale == 0] = 1.0
        self.row_scale = 1.0 / scale
        M *= self.row_scale[:, None]
        rhs_m = lp.alpha * self.row_scale

        crash_cols = np.arange(C) * m + crash
        # eliminate the crash columns from the moment rows using the cell rows
        base = M[:, crash_cols]                          # (n, C)
        Mc = M - np.repeat(base, m, axis=1)
        rhs_c = rhs_m - base.sum(axis=1)
        sign = np.where(rhs_c < 0, -1.0, 1.0)
        Mc *= sign[:, None]
        rhs_c *= sign

        n_real = C * m
        ncols = n_real + 2 * n
        T = np.zeros((n + C, ncols + 1))
        T[:n, :n_real] = Mc
        art = n_real + 2 * np.arange(n)
        T[np.arange(n), art] = sign            # a+ column
        T[np.arange(n), art + 1] = -sign       # a- column
        T[:n, -1] = rhs_c
        T[n + np.repeat(np.arange(C), m), np.arange(n_real)] = 1.0
        T[n:, -1] = 1.0
        basis = np.empty(n + C, dtype=np.int64)
        basis[:n] = np.where(sign > 0, art, art + 1)
        basis[n:] = crash_cols
        self.state = SimplexState(T, basis)
        self.n_real = n_real
        self.artificial = np.zeros(ncols, dtype=bool)
        self.artificial[n_real:] = True
        self.phase1_cost = np.zeros(ncols)
        self.phase1_cost[n_real:] = np.repeat(1.0 / self.row_scale, 2)
        self.kept_rows = np.arange(n + C)
        self.eligible = np.ones(ncols, dtype=bool)
        if allowed is not None:
            self.eligible[:n_real] = np.asarray(allowed, dtype=bool).ravel()

    def phase1(self, rule):
        status = run_simplex(self.state, self.phase1_cost, eligible=self.eligible, rule=rule)
        basic_art = self.artificial[self.state.basis]
        dist = float(self.phase1_cost[self.state.basis[basic_art]] @ self.state.rhs[basic_art])
        return status, max(dist, 0.0)

    def phase2(self, rule):
        redundant = drive_out(self.state, self.artificial, self.eligible)
        if redundant.size:
            keep = drop_rows(self.state, redundant)
            self.kept_rows = self.kept_rows[keep]
        cost = np.zeros(self.state.n_cols)
        cost[: self.n_real] = self.lp.cost.ravel()
        return run_simplex(self.state, cost, eligible=self.eligible & ~self.artificial, rule=rule)

    def polished_weights(self) -> np.ndarray:
        """Re-solve the final basis against the original rows."""
        lp = self.lp
        C, m, n = lp.n_cells, lp.m, lp.n
        basis = self.state.basis
        rows = self.kept_rows
        B = np.zeros((rows.size, rows.size))
        b = np.empty(rows.size)
        for k, r in enumerate(rows):
            if r < n:
                b[k] = lp.alpha[r] * self.row_scale[r]
            else:
                b[k] = 1.0
        cells, idx = np.divmod(basis, m)
        pos = {int(r): k for k, r in enumerate(rows)}
        for q, (c, i) in enumerate(zip(cells, idx)):
            for r in range(n):
                if r in pos:
                    B[pos[r], q] = lp.coef[c, i, r] * self.row_scale[r]
            if n + c in pos:
                B[pos[n + c], q] = 1.0
        try:
            xb = np.linalg.solve(B, b)
        except np.linalg.LinAlgError:
            xb = self.state.rhs.copy()
        x = np.zeros(C * m)
        x[basis] = xb
        return x.reshape(C, m)


def _check(lp: DiscreteLP, w: np.ndarray, feas_tol: float) -> bool:
    res = np.linalg.norm(lp.residual(w))
    rows = np.abs(w.sum(axis=1) - 1.0).max()
    return bool(res <= feas_tol * (1 + np.linalg.norm(lp.alpha)) and rows <= 1e-10
                and w.min() >= -1e-10)


def simplex_solve(lp: DiscreteLP, *, rule: str = "hybrid", feas_tol: float = FEAS_TOL,
                  crash: Optional[np.ndarray] = None,
                  allowed: Optional[np.ndarray] = None) -> OracleSolution:
    """Optimal basic solution of the discrete LP.

    ``allowed`` is an optional ``(cells, m)`` mask; weights outside it are
    held at zero.

    Status ``infeasible`` means alpha lies outside the reachable moment set
    (``infeasibility`` is its l1 distance); ``numerically_suspect`` flags a
    final basis whose re-solved solution violates the tolerances.
    """
    if allowed is not None:
        allowed = np.asarray(allowed, dtype=bool)
        if allowed.shape != lp.cost.shape or not np.all(allowed.any(axis=1)):
            raise ValidationError("allowed mask must have shape (cells, m) with a column per cell")
    if crash is None:
        crash = np.argmin(lp.cost if allowed is None else np.where(allowed, lp.cost, np.inf), axis=1)
    tab = _Tableau(lp, np.asarray(crash, dtype=np.int64), allowed)
    status, dist = tab.phase1(rule)
    if status != "optimal":
        return OracleSolution(None, np.nan, "numerically_suspect", 0, tab.state.iterations, dist)
    if dist > feas_tol * (1 + np.linalg.norm(lp.alpha, 1)):
        return OracleSolution(None, np.nan, "infeasible", 0, tab.state.iterations, dist)
    status = tab.phase2(rule)
    w = tab.polished_weights()
    ok = status == "optimal" and _check(lp, w, feas_tol)
    w = np.clip(w, 0.0, None)
    w /= w.sum(axis=1, keepdims=True)
    theta = RelaxedDensity(w)
    return OracleSolution(
        theta=theta,
        objective_value=lp.objective(theta),
        status="optimal" if ok else "numerically_suspect",
        fractional_cells=int(fractional_cells(theta).size),
        iterations=tab.state.iterations,
    )


def phase1_feasible(family: FunctionFamily, target: MomentTarget, dom: SampledDomain, *,
                    rule: str = "hybrid", feas_tol: float = FEAS_TOL) -> Feasibility:
    """Phase-1 verdict on whether alpha is reachable; ``distance`` is the l1
    distance from alpha to the reachable moment set."""
    check_shapes(family, dom, target=target)
    lp = build_discrete_lp(family, target, np.zeros((family.n_cells, family.m)), dom)
    tab = _Tableau(lp, np.zeros(lp.n_cells, dtype=np.int64))
    status, dist = tab.phase1(rule)
    if status != "optimal":
        raise ValidationError(f"phase-1 simplex ended with status {status}")
    feasible = dist <= feas_tol * (1 + np.linalg.norm(target.alpha, 1))
    return Feasibility(bool(feasible), 0.0 if feasible else dist, tab.state.iterations)
