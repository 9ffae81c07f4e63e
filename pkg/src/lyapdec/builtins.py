"""Named families, densities and fields selectable from a run config."""

from __future__ import annotations

import numpy as np
from scipy.special import polygamma

from .errors import ValidationError
from .family import CountableFamilySpec, FunctionFamily, RelaxedDensity, SampledDomain
from .fields import AuxiliaryField, sample_field


def _const(value):
    return lambda x: np.full(len(x), float(value))


def demo_family(dom: SampledDomain, **_) -> FunctionFamily:
    """``f_1 = 1``, ``f_2 = 0`` in ``R^1``."""
    return FunctionFamily.from_callables([_const(1.0), _const(0.0)], dom, source="builtin:demo")


def random_family(dom: SampledDomain, m: int = 3, n: int = 2, seed: int = 0, k_max: int = 2,
                  **_) -> FunctionFamily:
    """Band-limited random family: component ``k`` of ``f_i`` is an independent smooth field."""
    comps = [sample_field(dom, m, {"name": "smooth_fourier", "k_max": k_max}, [seed, k]).values
             for k in range(n)]
    return FunctionFamily(np.stack(comps, axis=2), source=f"builtin:random(seed={seed})")


def identical_pair_family(dom: SampledDomain, m: int = 3, n: int = 2, seed: int = 0, **kw):
    """Random family with ``f_2 = f_1``."""
    v = np.array(random_family(dom, m, n, seed, **kw).values)
    v[:, 1] = v[:, 0]
    return FunctionFamily(v, source=f"builtin:identical_pair(seed={seed})")


FAMILIES = {
    "demo": demo_family,
    "random": random_family,
    "identical_pair": identical_pair_family,
}


def geometric_spec(**_) -> CountableFamilySpec:
    """``f_i = 2^-i``; the tail bound is the full tail sum ``2^-I``."""
    return CountableFamilySpec(
        generator=lambda i, x: np.full((len(x), 1), 2.0**-i),
        envelope=lambda x: np.full(len(x), 0.5),
        tail_bound=lambda I, x: np.full(len(x), 2.0**-I),
        density=lambda i, x: np.full(len(x), 2.0**-i),
        name="geometric",
    )


def inverse_square_spec(**_) -> CountableFamilySpec:
    """``f_i(x) = x_1 / i^2`` with tail bound ``x_1 sum_{i > I} i^-2``."""
    return CountableFamilySpec(
        generator=lambda i, x: (x[:, 0] / i**2)[:, None],
        envelope=lambda x: x[:, 0],
        tail_bound=lambda I, x: x[:, 0] * float(polygamma(1, I + 1)),
        density=lambda i, x: np.full(len(x), 6.0 / (np.pi**2 * i**2)),
        name="inverse_square",
    )


def nondecaying_spec(**_) -> CountableFamilySpec:
    """``f_i = (-1)^i``: the tail never shrinks, so truncation must be refused."""
    return CountableFamilySpec(
        generator=lambda i, x: np.full((len(x), 1), (-1.0) ** i),
        envelope=lambda x: np.ones(len(x)),
        tail_bound=lambda I, x: np.ones(len(x)),
        density=lambda i, x: np.full(len(x), 2.0**-i),
        name="nondecaying",
    )


COUNTABLE = {
    "geometric": geometric_spec,
    "inverse_square": inverse_square_spec,
    "nondecaying": nondecaying_spec,
}


def density(name: str, dom: SampledDomain, m: int, index: int = 1, seed: int = 0,
            **_) -> RelaxedDensity:
    if name == "uniform":
        return RelaxedDensity.uniform(dom.n_cells, m)
    if name == "vertex":
        if not 1 <= index <= m:
            raise ValidationError(f"vertex index must lie in 1..{m}")
        return RelaxedDensity.vertex(np.full(dom.n_cells, index - 1), m)
    if name == "stripes":
        return RelaxedDensity.vertex(np.arange(dom.n_cells) % m, m)
    if name == "random":
        rng = np.random.default_rng(seed)
        return RelaxedDensity(rng.dirichlet(np.ones(m), size=dom.n_cells))
    raise ValidationError(f"unknown builtin density {name!r}")


def field(name: str, dom: SampledDomain, family: FunctionFamily, **params) -> AuxiliaryField:
    C, m = family.n_cells, family.m
    if name == "ramp":
        v = np.zeros((C, m))
        v[:, 0] = dom.points[:, 0]
        return AuxiliaryField(v, "builtin:ramp")
    if name == "zero":
        return AuxiliaryField(np.zeros((C, m)), "builtin:zero")
    if name == "equal":
        return AuxiliaryField(np.repeat(dom.points[:, :1], m, axis=1), "builtin:equal")
    if name == "multiplier":
        lam = np.atleast_1d(np.asarray(params.get("lambda", [1.0] * family.n), dtype=float))
        if lam.shape != (family.n,):
            raise ValidationError(f"multiplier field needs lambda of length {family.n}")
        return AuxiliaryField(family.values @ lam, f"builtin:multiplier({lam.tolist()})")
    raise ValidationError(f"unknown builtin field {name!r}")
