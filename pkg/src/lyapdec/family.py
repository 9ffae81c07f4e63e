"""Gridded domain, function families, relaxed densities and moment targets.

The compact set is the unit cube ``[0, 1]^d`` split into a uniform grid.
Every function is represented by its value at the cell centres, and
integrals are midpoint sums ``sum_c measure[c] * value[c]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import HypothesisViolation, ResourceError, ValidationError

MAX_CELLS = 10**7
CLAMP_TOL = 1e-12
SUM_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SampledDomain:
    """Uniform grid on ``[0, 1]^d``.

    Cells are enumerated in C order of their multi-index, so for ``d = 2``
    the last coordinate varies fastest.
    """

    d: int
    cells_per_axis: int
    points: np.ndarray
    measures: np.ndarray
    multi_index: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.measures.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.cells_per_axis

    def quadrature(self, values) -> np.ndarray:
        """Midpoint rule: contract the leading (cell) axis against the measures."""
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_cells:
            raise ValidationError(
                f"expected {self.n_cells} cell values, got {values.shape[0]}")
        return np.tensordot(self.measures, values, axes=(0, 0))


def build_domain(d: int, cells_per_axis: int, max_cells: int = MAX_CELLS) -> SampledDomain:
    if int(d) != d or d < 1:
        raise ValidationError(f"dimension must be a positive integer, got {d!r}")
    if int(cells_per_axis) != cells_per_axis or cells_per_axis < 1:
        raise ValidationError(f"cells_per_axis must be a positive integer, got {cells_per_axis!r}")
    d, k = int(d), int(cells_per_axis)
    total = k**d
    if total > max_cells:
        raise ResourceError(f"grid of {k}^{d} = {total} cells exceeds the cap of {max_cells} cells")
    idx = np.indices((k,) * d).reshape(d, -1).T
    points = (idx + 0.5) / k
    measures = np.full(total, float(k) ** (-d))
    return SampledDomain(d, k, _frozen(points), _frozen(measures), _frozen(idx, dtype=np.int64))


@dataclass(frozen=True)
class FunctionFamily:
    """Cell samples ``values[c, i, :] = f_i(x_c)`` of ``m`` maps into ``R^n``."""

    values: np.ndarray
    source: str = "table"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3:
            raise ValidationError(f"family values must have shape (cells, m, n), got {v.shape}")
        if 0 in v.shape:
            raise ValidationError(f"family values must be non-empty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("family values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def n(self) -> int:
        return self.values.shape[2]

    def check_domain(self, dom: SampledDomain):
        if self.n_cells != dom.n_cells:
            raise ValidationError(
                f"family has {self.n_cells} cells but the domain has {dom.n_cells}")

    def permuted(self, perm) -> "FunctionFamily":
        """Relabel the family: new index ``k`` carries old index ``perm[k]``."""
        return FunctionFamily(self.values[:, list(perm), :], self.source)

    @classmethod
    def from_callables(cls, funcs, dom: SampledDomain, source: str = "builtin"):
        """Sample callables ``f(points) -> (cells, n)`` (or ``(cells,)``) at the cell centres."""
        cols = []
        for f in funcs:
            val = np.asarray(f(dom.points), dtype=float)
            if val.ndim == 0:
                val = np.full((dom.n_cells, 1), float(val))
            elif val.ndim == 1:
                val = val[:, None]
            cols.append(np.broadcast_to(val, (dom.n_cells, val.shape[1])))
        return cls(np.stack(cols, axis=1), source)


@dataclass(frozen=True)
class RelaxedDensity:
    """Per-cell simplex weights ``weights[c, i] = theta_i(x_c)``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2:
            raise ValidationError(f"density must have shape (cells, m), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("density weights must be finite")
        if np.any(w < -CLAMP_TOL):
            c = int(np.argmin(w.min(axis=1)))
            raise ValidationError(f"negative density weight {w[c].min():.3e} in cell {c}")
        if np.any(w < 0):
            w = np.maximum(w, 0.0)
            w /= w.sum(axis=1, keepdims=True)
        sums = w.sum(axis=1)
        bad = np.abs(sums - 1.0) > SUM_TOL
        if np.any(bad):
            c = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"density weights in cell {c} sum to {sums[c]!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def uniform(cls, n_cells: int, m: int):
        return cls(np.full((n_cells, m), 1.0 / m))

    @classmethod
    def vertex(cls, assignment, m: int):
        """Extremal density from a 0-based index per cell."""
        assignment = np.asarray(assignment, dtype=np.int64)
        w = np.zeros((assignment.size, m))
        w[np.arange(assignment.size), assignment] = 1.0
        return cls(w)

    def is_extremal(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.weights.max(axis=1) >= 1.0 - tol))


@dataclass(frozen=True)
class MomentTarget:
    alpha: np.ndarray
    source_density: Optional[RelaxedDensity] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        a = np.atleast_1d(np.array(self.alpha, dtype=float))
        if a.ndim != 1 or not np.all(np.isfinite(a)):
            raise ValidationError(f"alpha must be a finite vector, got {a!r}")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @property
    def n(self) -> int:
        return self.alpha.shape[0]


def check_shapes(family: FunctionFamily, dom: SampledDomain, *, density=None, target=None, field=None):
    """Raise ``ValidationError`` unless all supplied objects agree on cells, m and n."""
    family.check_domain(dom)
    if density is not None:
        if density.weights.shape != (family.n_cells, family.m):
            raise ValidationError(
                f"density shape {density.weights.shape} does not match "
                f"(cells, m) = {(family.n_cells, family.m)}")
    if target is not None and target.n != family.n:
        raise ValidationError(f"alpha has length {target.n} but the family maps into R^{family.n}")
    if field is not None:
        shape = np.shape(getattr(field, "values", field))
        if shape != (family.n_cells, family.m):
            raise ValidationError(
                f"field shape {shape} does not match (cells, m) = {(family.n_cells, family.m)}")


def compute_alpha(family: FunctionFamily, theta_bar: RelaxedDensity, dom: SampledDomain) -> MomentTarget:
    """Moment ``alpha = sum_c measure_c sum_i theta_i(x_c) f_i(x_c)``."""
    check_shapes(family, dom, density=theta_bar)
    alpha = np.einsum("c,ci,cin->n", dom.measures, theta_bar.weights, family.values)
    return MomentTarget(alpha, theta_bar)


# -- countable families -----------------------------------------------------

@dataclass(frozen=True)
class CountableFamilySpec:
    """A countable family ``(f_i)_{i >= 1}`` given by rules on the cell centres.

    ``generator(i, points)`` returns the ``(cells, n)`` samples of ``f_i``
    (1-based ``i``), ``envelope(points)`` bounds ``sup_i |f_i|`` and
    ``tail_bound(I, points)`` bounds ``sup_{i > I} |f_i|`` cellwise.
    ``density(i, points)``, when given, is the relaxed weight of index ``i``.
    """

    generator: Callable
    envelope: Callable
    tail_bound: Callable
    density: Optional[Callable] = None
    name: str = "countable"


def _cellwise(values, dom):
    values = np.asarray(values, dtype=float)
    return np.broadcast_to(values, (dom.n_cells,)) if values.ndim == 0 else values


def tail_quadrature(spec: CountableFamilySpec, I: int, dom: SampledDomain) -> float:
    return float(dom.quadrature(_cellwise(spec.tail_bound(I, dom.points), dom)))


def truncate_countable(spec: CountableFamilySpec, dom: SampledDomain, eps_tail: float,
                       i_max: int = 10_000):
    """Keep the first ``I`` members, with ``I`` the smallest index whose tail
    quadrature is at most ``eps_tail``.

    Returns ``(family, tail_error)``; ``tail_error`` bounds the moment
    contribution of every index beyond ``I``.
    """
    if not eps_tail > 0:
        raise ValidationError(f"eps_tail must be positive, got {eps_tail!r}")
    env = dom.quadrature(_cellwise(spec.envelope(dom.points), dom))
    if not np.isfinite(env):
        raise HypothesisViolation(
            f"{spec.name}: envelope sup_i |f_i| is not integrable (quadrature {env})")
    prev = np.inf
    for I in range(1, i_max + 1):
        tail = tail_quadrature(spec, I, dom)
        if tail > prev * (1 + 1e-12) + 1e-300:
            raise ValidationError(f"{spec.name}: tail quadrature increases at I={I}")
        prev = tail
        if tail <= eps_tail:
            break
    else:
        raise HypothesisViolation(
            f"{spec.name}: integrable-envelope hypothesis fails, tail quadrature "
            f"{prev:.3e} > eps_tail={eps_tail:.3e} for every I <= {i_max}")
    funcs = [lambda x, i=i: spec.generator(i, x) for i in range(1, I + 1)]
    family = FunctionFamily.from_callables(funcs, dom, source=f"countable:{spec.name}[1..{I}]")
    return family, tail


def truncate_density(spec: CountableFamilySpec, I: int, dom: SampledDomain):
    """Renormalize the first ``I`` relaxed weights.

    Returns ``(density, alpha_shift_bound)`` where the bound
    ``sum_c measure_c s_c (e_c + t_I(x_c))`` (``s`` the discarded tail mass,
    ``e`` the envelope) dominates the change of alpha caused by dropping
    and renormalizing.
    """
    if spec.density is None:
        raise ValidationError(f"{spec.name}: no relaxed density rule supplied")
    w = np.stack([_cellwise(spec.density(i, dom.points), dom) for i in range(1, I + 1)], axis=1)
    if np.any(w < -CLAMP_TOL):
        raise ValidationError(f"{spec.name}: negative relaxed weights")
    w = np.maximum(w, 0.0)
    kept = w.sum(axis=1)
    if np.any(kept <= 0):
        raise ValidationError(f"{spec.name}: some cell carries all its mass beyond I={I}")
    tail_mass = np.clip(1.0 - kept, 0.0, None)
    env = _cellwise(spec.envelope(dom.points), dom)
    tail = _cellwise(spec.tail_bound(I, dom.points), dom)
    bound = float(dom.quadrature(tail_mass * (env + tail)))
    return RelaxedDensity(w / kept[:, None]), bound


def countable_alpha(spec: CountableFamilySpec, dom: SampledDomain, terms: int) -> np.ndarray:
    """Partial sum of the countable moment over the first ``terms`` indices."""
    total = 0.0
    for i in range(1, terms + 1):
        f = np.asarray(spec.generator(i, dom.points), dtype=float)
        f = f[:, None] if f.ndim == 1 else f
        th = _cellwise(spec.density(i, dom.points), dom)
        total = total + dom.quadrature(th[:, None] * np.broadcast_to(f, (dom.n_cells, f.shape[1])))
    return np.atleast_1d(total)
