"""Dual method: maximize the concave dual, then read off a bang-bang partition.

For a multiplier ``lam`` in ``R^n`` the dual function is

    D(lam) = lam . alpha + sum_c measure_c min_i (v_i(x_c) - lam . f_i(x_c))

which is concave and piecewise linear on the grid.  At a maximizer the
primal optimum picks, in every cell, an index attaining the minimum.  Cells
where several indices tie are resolved by a small LP so that the moment
constraint holds exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CertificateInconsistent, ValidationError
from .family import FunctionFamily, MomentTarget, RelaxedDensity, SampledDomain, check_shapes
from .fields import AuxiliaryField, as_field
from .oracle import DiscreteLP, fractional_cells, phase1_feasible, simplex_solve
from .simplex import linprog

TOL_TIE = 1e-8


@dataclass(frozen=True)
class DualConfig:
    tol_tie: float = TOL_TIE
    box: float = 1e3
    box_growth: int = 3
    max_iter: int = 500
    gap_tol: float = 1e-10
    check_feasible: bool = False

    def __post_init__(self):
        for name in ("tol_tie", "box", "gap_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")


def margins(lam, family: FunctionFamily, field) -> np.ndarray:
    """``v_i(x_c) - lam . f_i(x_c)`` for every cell and index, shape ``(cells, m)``."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return as_field(field).values - family.values @ lam


def _check(lam, family, field, target, dom):
    check_shapes(family, dom, target=target, field=field)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (family.n,):
        raise ValidationError(f"multiplier must have length {family.n}, got {lam.shape}")
    return lam


def dual_value(lam, family: FunctionFamily, field, target: MomentTarget, dom: SampledDomain) -> float:
    lam = _check(lam, family, field, target, dom)
    return float(lam @ target.alpha + dom.measures @ margins(lam, family, field).min(axis=1))


def dual_subgradient(lam, family: FunctionFamily, field, target: MomentTarget,
                     dom: SampledDomain) -> np.ndarray:
    """Supergradient ``alpha - sum_c measure_c f_{i*(c)}(x_c)`` with the lowest-index argmin."""
    lam = _check(lam, family, field, target, dom)
    star = np.argmin(margins(lam, family, field), axis=1)
    picked = family.values[np.arange(family.n_cells), star]
    return target.alpha - dom.measures @ picked


def tie_sets(lam, family, field, tol: float = TOL_TIE):
    """Cells where two or more indices reach the cellwise minimum within ``tol``.

    Returns ``(mask, cells)`` with ``mask[c, i]`` true on near-minimal indices.
    """
    M = margins(lam, family, field)
    mask = M - M.min(axis=1, keepdims=True) <= tol
    cells = np.flatnonzero(mask.sum(axis=1) >= 2)
    return mask, cells


@dataclass(frozen=True)
class DualCertificate:
    lambda_star: np.ndarray
    dual_value: float
    iterations: int
    tie_cells: list
    tie_measure: float
    subgradient_norm_at_opt: float
    upper_bound: float
    converged: bool
    box: float
    box_active: bool
    tol_tie: float = TOL_TIE
    method: str = "kelley"

    @property
    def gap(self) -> float:
        return self.upper_bound - self.dual_value

    def summary(self) -> dict:
        return {
            "lambda_star": [float(x) for x in self.lambda_star],
            "dual_value": float(self.dual_value),
            "upper_bound": float(self.upper_bound) if np.isfinite(self.upper_bound) else None,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "method": self.method,
            "tie_cells": len(self.tie_cells),
            "tie_measure": float(self.tie_measure),
            "subgradient_norm_at_opt": float(self.subgradient_norm_at_opt),
            "box": float(self.box),
            "box_active": bool(self.box_active),
            "tol_tie": float(self.tol_tie),
        }


def _master(cuts_g, cuts_a, box, n):
    """Solve ``max t`` s.t. ``t <= a_k + g_k . lam`` and ``|lam|_inf <= box``."""
    G = np.asarray(cuts_g)
    A_ub = np.hstack([np.ones((G.shape[0], 1)), -G])
    c = np.zeros(n + 1)
    c[0] = -1.0
    bounds = [(None, None)] + [(-box, box)] * n
    res = linprog(c, A_ub=A_ub, b_ub=np.asarray(cuts_a), bounds=bounds)
    if res.status != "optimal":
        return None, None
    return res.x[1:], float(res.x[0])


def maximize_dual(family: FunctionFamily, field, target: MomentTarget, dom: SampledDomain,
                  cfg: Optional[DualConfig] = None, lam0=None) -> DualCertificate:
    """Kelley cutting-plane ascent on ``D`` inside the box ``|lam|_inf <= cfg.box``.

    Each master LP maximizes the cut model over the box.  The loop stops once
    the model's upper bound is within ``gap_tol * (1 + |best D|)`` of the best
    evaluated value.  A maximizer on the box boundary enlarges the box tenfold
    (at most ``box_growth`` times); a failed master LP switches to Polyak steps.
    """
    cfg = cfg or DualConfig()
    check_shapes(family, dom, target=target, field=field)
    field = as_field(field)
    if cfg.check_feasible and not phase1_feasible(family, target, dom):
        raise ValidationError("alpha is outside the reachable moment set")
    n = family.n
    alpha = target.alpha
    mu = dom.measures
    F = family.values
    V = field.values
    rows = np.arange(family.n_cells)

    def evaluate(lam):
        M = V - F @ lam
        star = np.argmin(M, axis=1)
        val = float(lam @ alpha + mu @ M[rows, star])
        return val, alpha - mu @ F[rows, star]

    lam = np.zeros(n) if lam0 is None else np.array(lam0, dtype=float)
    box = cfg.box
    cuts_g, cuts_a = [], []
    best, best_lam = -np.inf, lam.copy()
    ub = np.inf
    converged = False
    method = "kelley"
    growth = 0
    it = 0
    while it < cfg.max_iter:
        it += 1
        val, g = evaluate(lam)
        if val > best:
            best, best_lam = val, lam.copy()
        cuts_g.append(g)
        cuts_a.append(val - g @ lam)
        if method == "kelley":
            nxt, ub_new = _master(cuts_g, cuts_a, box, n)
            if nxt is None:
                method = "polyak"
            else:
                lam, ub = nxt, ub_new
        if method == "polyak":
            # step toward the last model bound
            gg = float(g @ g)
            if gg == 0.0:
                ub = best
            else:
                target_val = ub if np.isfinite(ub) else best + 1.0
                lam = np.clip(lam + max(target_val - val, 1e-12) / gg * g, -box, box)
        if ub - best <= cfg.gap_tol * (1.0 + abs(best)):
            on_edge = np.max(np.abs(best_lam), initial=0.0) >= box * (1 - 1e-9)
            if on_edge and growth < cfg.box_growth:
                growth += 1
                box *= 10.0
                ub = np.inf
                if method == "kelley":
                    nxt, ub_new = _master(cuts_g, cuts_a, box, n)
                    if nxt is not None:
                        lam, ub = nxt, ub_new
                continue
            converged = True
            if method == "kelley" and not np.array_equal(lam, best_lam):
                # The master optimum is a vertex of the cut model, where the
                # pieces meeting there tie exactly; prefer it when it is as
                # good, since the recovery step reads ties off the multiplier.
                val, _ = evaluate(lam)
                if val >= best - cfg.gap_tol * (1.0 + abs(best)):
                    best, best_lam = max(best, val), lam.copy()
            break
    box_active = bool(np.max(np.abs(best_lam), initial=0.0) >= box * (1 - 1e-9))
    if box_active:
        warnings.warn(
            f"dual maximizer sits on the multiplier box |lam| <= {box:g}; the target may lie "
            "on the boundary of the reachable set or the instance is degenerate",
            RuntimeWarning, stacklevel=2)
    mask, cells = tie_sets(best_lam, family, field, cfg.tol_tie)
    ties = [(int(c), tuple(int(i) for i in np.flatnonzero(mask[c]))) for c in cells]
    sub = dual_subgradient(best_lam, family, field, target, dom)
    return DualCertificate(
        lambda_star=best_lam,
        dual_value=dual_value(best_lam, family, field, target, dom),
        iterations=it,
        tie_cells=ties,
        tie_measure=float(mu[cells].sum()),
        subgradient_norm_at_opt=float(np.linalg.norm(sub)),
        upper_bound=float(ub) if converged else float(ub if np.isfinite(ub) else np.nan),
        converged=converged,
        box=box,
        box_active=box_active,
        tol_tie=cfg.tol_tie,
        method=method,
    )


@dataclass(frozen=True)
class Partition:
    """Cell-to-index assignment; ``assignment[c] == -1`` marks a fractional cell
    whose weights are stored in ``fractional[c]``."""

    assignment: np.ndarray
    m: int
    fractional: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64)
        if np.any(a >= self.m) or np.any(a < -1):
            raise ValidationError("assignment indices out of range")
        missing = set(np.flatnonzero(a < 0).tolist()) ^ set(self.fractional)
        if missing:
            raise ValidationError(f"fractional cells and weights disagree on cells {sorted(missing)[:5]}")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def fractional_cells(self) -> list:
        return sorted(self.fractional)

    def weights(self) -> np.ndarray:
        w = np.zeros((self.assignment.size, self.m))
        ext = self.assignment >= 0
        w[np.flatnonzero(ext), self.assignment[ext]] = 1.0
        for c, wc in self.fractional.items():
            w[c] = wc
        return w

    def to_density(self) -> RelaxedDensity:
        return RelaxedDensity(self.weights())

    @classmethod
    def from_weights(cls, weights, tol: float = 1e-9) -> "Partition":
        w = np.asarray(weights, dtype=float)
        frac = set(fractional_cells(w, tol).tolist())
        a = np.argmax(w, axis=1)
        a[list(frac)] = -1
        return cls(a, w.shape[1], {c: w[c].copy() for c in sorted(frac)})


def recover_bang_bang(cert: DualCertificate, family: FunctionFamily, field, target: MomentTarget,
                      dom: SampledDomain) -> Partition:
    """Primal partition from a dual certificate.

    Untied cells take their unique minimizing index.  Tied cells are resolved
    by a basic solution of the LP restricted to the tied cells and their tied
    indices, which matches alpha exactly; a basic solution leaves at most
    ``n`` of them fractional.
    """
    if not cert.converged:
        raise CertificateInconsistent("dual certificate did not converge; refusing to recover")
    check_shapes(family, dom, target=target, field=field)
    field = as_field(field)
    mask, cells = tie_sets(cert.lambda_star, family, field, cert.tol_tie)
    assignment = np.argmin(margins(cert.lambda_star, family, field), axis=1)
    fixed = np.ones(family.n_cells, dtype=bool)
    fixed[cells] = False
    mu = dom.measures
    idx = np.flatnonzero(fixed)
    fixed_moment = mu[idx] @ family.values[idx, assignment[idx]]
    if cells.size == 0:
        residual = np.linalg.norm(fixed_moment - target.alpha)
        if residual > 1e-8 * (1 + np.linalg.norm(target.alpha)):
            raise CertificateInconsistent(
                f"no tied cells and the argmin partition misses alpha by {residual:.3e}")
        return Partition(assignment, family.m)
    sub = DiscreteLP(
        cost=mu[cells, None] * field.values[cells],
        coef=mu[cells, None, None] * family.values[cells],
        alpha=target.alpha - fixed_moment,
    )
    sol = simplex_solve(sub, allowed=mask[cells])
    if sol.status != "optimal":
        raise CertificateInconsistent(
            f"tie LP over {cells.size} cells is {sol.status} "
            f"(l1 miss {sol.infeasibility:.3e}); the dual multiplier is not optimal")
    w = sol.theta.weights
    frac_local = set(fractional_cells(w).tolist())
    assignment = assignment.copy()
    fractional = {}
    for k, c in enumerate(cells):
        if k in frac_local:
            assignment[c] = -1
            fractional[int(c)] = w[k].copy()
        else:
            assignment[c] = int(np.argmax(w[k]))
    return Partition(assignment, family.m, fractional)


@dataclass(frozen=True)
class PartitionReport:
    moment: np.ndarray
    moment_error: float
    objective: Optional[float]
    fractional_count: int
    extremal_fraction: float
    index_measures: np.ndarray
    total_measure: float

    def summary(self) -> dict:
        return {
            "moment": [float(x) for x in self.moment],
            "moment_error": float(self.moment_error),
            "objective": None if self.objective is None else float(self.objective),
            "fractional_cells": int(self.fractional_count),
            "extremal_fraction": float(self.extremal_fraction),
            "index_measures": [float(x) for x in self.index_measures],
            "total_measure": float(self.total_measure),
        }


def verify_partition(p: Partition, family: FunctionFamily, target: MomentTarget, dom: SampledDomain,
                     field=None) -> PartitionReport:
    """Recompute the partition's moment from scratch and compare it to alpha.

    Never raises on a wrong partition; the discrepancy is reported.
    """
    w = p.weights()
    mu = dom.measures
    moment = np.einsum("c,ci,cin->n", mu, w, family.values)
    frac = np.array(p.fractional_cells, dtype=np.int64)
    ext_measure = float(mu.sum() - mu[frac].sum())
    objective = None
    if field is not None:
        objective = float(mu @ np.sum(w * as_field(field).values, axis=1))
    return PartitionReport(
        moment=moment,
        moment_error=float(np.linalg.norm(moment - target.alpha)),
        objective=objective,
        fractional_count=int(frac.size),
        extremal_fraction=ext_measure,
        index_measures=mu @ w,
        total_measure=float(mu[p.assignment >= 0].sum() + mu[frac].sum()),
    )
