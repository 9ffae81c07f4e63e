"""Degeneracy certificates, perturbation to genericity and the residuality probe.

A field ``v`` is degenerate for the pair ``(i1, i2)`` when

    v_i1(x) - v_i2(x) = lam . (f_i1(x) - f_i2(x))

holds for a single ``lam`` on a set of positive measure.  On the grid this is
a maximum-feasible-subsystem question, attacked here with RANSAC: fit ``lam``
exactly through ``n`` random cells and count the measure of cells that agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Optional

import numpy as np

from .dual import DualConfig, maximize_dual, recover_bang_bang
from .errors import CertificateInconsistent, NongenericOutput, ValidationError
from .family import FunctionFamily, MomentTarget, SampledDomain, check_shapes
from .fields import AuxiliaryField, as_field, sample_field

RESIDUAL_TOL = 1e-7
ZERO_TOL = 1e-14
COND_MAX = 1e12


@dataclass(frozen=True)
class DetectConfig:
    residual_tol: float = RESIDUAL_TOL
    trials: Optional[int] = None          # default 200 * n
    seed: int = 0
    measure_threshold: Optional[float] = None   # default 10 * n / cells

    def n_trials(self, n: int) -> int:
        return self.trials if self.trials is not None else 200 * n

    def threshold(self, n: int, n_cells: int) -> float:
        if self.measure_threshold is not None:
            return self.measure_threshold
        return 10.0 * n / n_cells


@dataclass(frozen=True)
class DegeneracyReport:
    pair: tuple
    lambda_hat: Optional[np.ndarray]
    inlier_measure: float
    inlier_cells: np.ndarray
    residual_tol: float
    constraint_degenerate: bool = False
    trials: int = 0

    def summary(self) -> dict:
        return {
            "pair": [int(self.pair[0]) + 1, int(self.pair[1]) + 1],
            "lambda_hat": None if self.lambda_hat is None else [float(x) for x in self.lambda_hat],
            "inlier_measure": float(self.inlier_measure),
            "inlier_cells": int(self.inlier_cells.size),
            "residual_tol": float(self.residual_tol),
            "constraint_degenerate": bool(self.constraint_degenerate),
            "trials": int(self.trials),
        }


def _ransac(r, g, measures, tol, trials, rng):
    """Best ``(lam, inlier_measure)`` over exact fits through random cell samples.

    ``g`` is projected onto its row space first, so rank-deficient differences
    are fitted with as many cells as their rank.
    """
    C, n = g.shape
    _, s, wt = np.linalg.svd(g, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
    if rank == 0:
        return None, 0.0, 0
    Q = None if rank == n else wt[:rank].T
    gr = g if Q is None else g @ Q
    k = rank
    if C < k:
        return None, 0.0, 0
    picks = np.argpartition(rng.random((trials, C)), k - 1, axis=1)[:, :k] if k < C else \
        np.tile(np.arange(C), (trials, 1))
    Gs = gr[picks]                      # (trials, k, k)
    rs = r[picks]                       # (trials, k)
    cond = np.linalg.cond(Gs)
    ok = np.isfinite(cond) & (cond < COND_MAX)
    if not np.any(ok):
        return None, 0.0, 0
    mu = np.linalg.solve(Gs[ok], rs[ok][..., None])[..., 0]      # (used, k)
    res = np.abs(r[None, :] - mu @ gr.T)
    scores = (res <= tol) @ measures
    b = int(np.argmax(scores))
    lam = mu[b] if Q is None else Q @ mu[b]
    return lam, float(scores[b]), int(ok.sum())


def _detect(r, g, measures, cfg: DetectConfig, rng, pair):
    n = g.shape[1]
    tol = cfg.residual_tol
    if np.max(np.abs(g), initial=0.0) <= ZERO_TOL:
        # every lam works wherever the field difference vanishes
        cells = np.flatnonzero(np.abs(r) <= tol)
        return DegeneracyReport(pair, None, float(measures[cells].sum()), cells, tol, True, 0)
    lam, _, used = _ransac(r, g, measures, tol, cfg.n_trials(n), rng)
    if lam is None:
        return DegeneracyReport(pair, None, 0.0, np.zeros(0, dtype=np.int64), tol, False, used)
    cells = np.flatnonzero(np.abs(r - g @ lam) <= tol)
    return DegeneracyReport(pair, lam, float(measures[cells].sum()), cells, tol, False, used)


def _pair_rng(seed, pair):
    return np.random.default_rng([int(seed), int(pair[0]), int(pair[1])])


def detect_degeneracy(field, family: FunctionFamily, pair, dom: SampledDomain,
                      cfg: Optional[DetectConfig] = None) -> DegeneracyReport:
    """RANSAC search for a multiplier making the pair's field difference collinear
    with its family difference on a large set of cells.

    ``pair`` holds 0-based indices.  Deterministic for a given ``cfg.seed``.
    """
    cfg = cfg or DetectConfig()
    field = as_field(field)
    check_shapes(family, dom, field=field)
    i1, i2 = (int(p) for p in pair)
    if i1 == i2 or not (0 <= i1 < family.m and 0 <= i2 < family.m):
        raise ValidationError(f"pair must hold two distinct indices below {family.m}, got {pair}")
    g = family.values[:, i1] - family.values[:, i2]
    r = field.values[:, i1] - field.values[:, i2]
    return _detect(r, g, dom.measures, cfg, _pair_rng(cfg.seed, (i1, i2)), (i1, i2))


@dataclass(frozen=True)
class GenericityVerdict:
    generic: bool
    worst: Optional[DegeneracyReport]
    reports: list
    threshold: float

    def __bool__(self):
        return self.generic

    @property
    def constraint_degenerate_pairs(self) -> list:
        return [rep.pair for rep in self.reports if rep.constraint_degenerate]


def is_generic(field, family: FunctionFamily, dom: SampledDomain,
               cfg: Optional[DetectConfig] = None) -> GenericityVerdict:
    """Run the detector on every pair; generic iff every inlier measure is
    below ``cfg.threshold`` (default ``10 n / cells``)."""
    cfg = cfg or DetectConfig()
    threshold = cfg.threshold(family.n, family.n_cells)
    reports = [detect_degeneracy(field, family, p, dom, cfg)
               for p in combinations(range(family.m), 2)]
    if not reports:
        return GenericityVerdict(True, None, [], threshold)
    worst = max(reports, key=lambda rep: rep.inlier_measure)
    return GenericityVerdict(bool(worst.inlier_measure < threshold), worst, reports, threshold)


def pair_differences(family: FunctionFamily) -> list:
    """``[((i1, i2), f_i1 - f_i2), ...]`` over all unordered pairs."""
    return [((i1, i2), family.values[:, i1] - family.values[:, i2])
            for i1, i2 in combinations(range(family.m), 2)]


# -- perturbation ---------------------------------------------------------

@dataclass(frozen=True)
class PerturbationPlan:
    """Sub-grid layout for the density construction.

    The cube is cut into ``blocks_per_axis^d`` blocks of side ``h``; each
    grid cell is identified by its block ``j`` and its offset ``xi`` inside
    the block, so ``x_{j, xi} = xi + h j``.  ``y[c, i]`` is the value written
    into cell ``c`` for component ``i``.
    """

    eta: float
    N: float
    eps: float
    n: int
    blocks_per_axis: int
    h: float
    block: np.ndarray
    offset: np.ndarray
    y: np.ndarray = field(repr=False)

    def check(self, d: int):
        k = self.blocks_per_axis
        if not (k**d >= self.n + 1 and self.h**d < self.eps / (2 * self.n)):
            raise ValidationError(f"sub-grid {k}^{d} violates the block-count or block-size bound")


def choose_blocks(dom: SampledDomain, n: int, eps: float) -> int:
    """Smallest divisor ``k`` of the grid with ``k^d >= n + 1`` and ``k^-d < eps / (2 n)``."""
    d, M = dom.d, dom.cells_per_axis
    for k in range(1, M + 1):
        if M % k == 0 and k**d >= n + 1 and float(k) ** (-d) < eps / (2 * n):
            return k
    raise ValidationError(
        f"grid of {M} cells per axis admits no block count k | {M} with k^{d} >= {n + 1} "
        f"and k^-{d} < eps/(2n) = {eps / (2 * n):.3g}; refine the grid or raise eps")


def _layout(dom: SampledDomain, k: int):
    per = dom.cells_per_axis // k
    j = dom.multi_index // per
    xi = dom.multi_index % per
    block = np.ravel_multi_index(tuple(j.T), (k,) * dom.d)
    offset = np.ravel_multi_index(tuple(xi.T), (per,) * dom.d)
    return block, offset


def plan_perturbation(field, dom: SampledDomain, n: int, eta: float, N: float, eps: float,
                      rng) -> PerturbationPlan:
    """Jitter every sub-grid value uniformly in ``(-eta/2, eta/2)`` around the
    current field.  The jittered vector avoids the finitely many degenerate
    hyperplanes with probability one."""
    values = as_field(field).values
    k = choose_blocks(dom, n, eps)
    block, offset = _layout(dom, k)
    y = values + rng.uniform(-eta / 2, eta / 2, size=values.shape)
    plan = PerturbationPlan(float(eta), float(N), float(eps), int(n), k, 1.0 / k, block, offset, y)
    plan.check(dom.d)
    return plan


def perturb_to_generic(field, g_list, eta: float, N: float, eps: float, dom: SampledDomain,
                       seed: int, cfg: Optional[DetectConfig] = None, retries: int = 3):
    """Move ``field`` by less than ``eta`` in sup norm to a generic field.

    ``g_list`` is ``[((i1, i2), g), ...]`` with ``g`` the ``(cells, n)``
    family difference of each pair (see :func:`pair_differences`).  Returns
    ``(field, plan)``.  Raises :class:`NongenericOutput` if ``retries`` fresh
    jitters all fail the post-hoc degeneracy check.
    """
    if not (eta > 0 and eps > 0 and N >= 1):
        raise ValidationError("need eta > 0, eps > 0 and N >= 1")
    base = as_field(field)
    if not g_list:
        return base, None
    n = g_list[0][1].shape[1]
    cfg = cfg or DetectConfig()
    threshold = cfg.threshold(n, dom.n_cells)
    worst = None
    for attempt in range(retries):
        rng = np.random.default_rng([int(seed), attempt])
        plan = plan_perturbation(base, dom, n, eta, N, eps, rng)
        w = plan.y
        worst = None
        for pair, g in g_list:
            r = w[:, pair[0]] - w[:, pair[1]]
            rep = _detect(r, g, dom.measures, cfg, _pair_rng(cfg.seed, pair), tuple(pair))
            if worst is None or rep.inlier_measure > worst.inlier_measure:
                worst = rep
        if worst.inlier_measure < threshold:
            return AuxiliaryField(w, f"perturbed_from({base.provenance})"), plan
    raise NongenericOutput(
        f"perturbed field still degenerate after {retries} attempts: pair "
        f"({worst.pair[0] + 1}, {worst.pair[1] + 1}) has inlier measure {worst.inlier_measure:.3g} >= {threshold:.3g}", worst)


def lambda_grid(N: float, n: int, spacing: float = 0.1) -> np.ndarray:
    """Points of ``[-N, N]^n`` on a grid with the given spacing."""
    steps = int(round(2 * N / spacing))
    axis = np.linspace(-N, N, steps + 1)
    return np.array(list(product(axis, repeat=n)))


def level_counts(w, g, plan: PerturbationPlan, lambdas, tol: float, chunk: int = 2048):
    """Largest number of near-level cells ``|w - lam . g| <= tol`` for any ``lam``.

    Returns ``(per_block, per_anchor)``: the maximum count within a single
    block, and the maximum count across blocks at one fixed offset.
    """
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    nb = int(plan.block.max()) + 1
    no = int(plan.offset.max()) + 1
    best_block = best_anchor = 0
    for s in range(0, len(lambdas), chunk):
        lam = np.asarray(lambdas[s:s + chunk])
        near = np.abs(w[None, :] - lam @ g.T) <= tol           # (L, C)
        if not near.any():
            continue
        L_idx, c_idx = np.nonzero(near)
        by_block = np.zeros((lam.shape[0], nb), dtype=np.int64)
        np.add.at(by_block, (L_idx, plan.block[c_idx]), 1)
        by_anchor = np.zeros((lam.shape[0], no), dtype=np.int64)
        np.add.at(by_anchor, (L_idx, plan.offset[c_idx]), 1)
        best_block = max(best_block, int(by_block.max()))
        best_anchor = max(best_anchor, int(by_anchor.max()))
    return best_block, best_anchor


# -- residuality probe -----------------------------------------------------

@dataclass(frozen=True)
class ProbeTrial:
    seed: int
    converged: bool
    generic: bool
    tie_measure: float
    fractional_cells: Optional[int]
    worst_inlier_measure: float
    constraint_degenerate_pairs: int
    recovered: bool

    def summary(self) -> dict:
        return {
            "seed": int(self.seed),
            "converged": bool(self.converged),
            "generic": bool(self.generic),
            "tie_measure": float(self.tie_measure),
            "fractional_cells": self.fractional_cells,
            "worst_inlier_measure": float(self.worst_inlier_measure),
            "constraint_degenerate_pairs": int(self.constraint_degenerate_pairs),
            "recovered": bool(self.recovered),
        }


@dataclass(frozen=True)
class ProbeStats:
    trials: list
    model: dict

    @property
    def generic_fraction(self) -> float:
        return float(np.mean([t.generic for t in self.trials]))

    @property
    def nonconverged(self) -> int:
        return sum(not t.converged for t in self.trials)

    @property
    def tie_measures(self) -> np.ndarray:
        return np.array([t.tie_measure for t in self.trials])

    def summary(self) -> dict:
        tm = self.tie_measures
        frac = [t.fractional_cells for t in self.trials if t.fractional_cells is not None]
        return {
            "model": dict(self.model),
            "trials": len(self.trials),
            "generic_fraction": self.generic_fraction,
            "nonconverged": int(self.nonconverged),
            "unrecovered": int(sum(t.converged and not t.recovered for t in self.trials)),
            "constraint_degenerate_trials": int(sum(t.constraint_degenerate_pairs > 0
                                                    for t in self.trials)),
            "tie_measure": {
                "mean": float(tm.mean()),
                "max": float(tm.max()),
                "quantiles": {str(q): float(np.quantile(tm, q)) for q in (0.5, 0.9, 0.99)},
            },
            "max_fractional_cells": int(max(frac)) if frac else None,
        }


def trial_seed(seed: int, t: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(t)]).generate_state(1)[0])


def residuality_probe(family: FunctionFamily, target: MomentTarget, dom: SampledDomain, trials: int,
                      model: dict, seed: int, dual_cfg: Optional[DualConfig] = None,
                      detect_cfg: Optional[DetectConfig] = None) -> ProbeStats:
    """Sample fields, solve each instance, and record genericity and tie statistics.

    Nonconverged or unrecoverable trials stay in the record with their flags set.
    """
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    check_shapes(family, dom, target=target)
    detect_cfg = detect_cfg or DetectConfig()
    records = []
    for t in range(trials):
        s = trial_seed(seed, t)
        v = sample_field(dom, family.m, model, s)
        cert = maximize_dual(family, v, target, dom, dual_cfg)
        frac, recovered = None, False
        if cert.converged:
            try:
                p = recover_bang_bang(cert, family, v, target, dom)
                frac, recovered = len(p.fractional_cells), True
            except CertificateInconsistent:
                pass
        cfg = DetectConfig(detect_cfg.residual_tol, detect_cfg.trials, s, detect_cfg.measure_threshold)
        verdict = is_generic(v, family, dom, cfg)
        records.append(ProbeTrial(
            seed=s,
            converged=cert.converged,
            generic=verdict.generic,
            tie_measure=cert.tie_measure,
            fractional_cells=frac,
            worst_inlier_measure=0.0 if verdict.worst is None else verdict.worst.inlier_measure,
            constraint_degenerate_pairs=len(verdict.constraint_degenerate_pairs),
            recovered=recovered,
        ))
    return ProbeStats(records, dict(model))
