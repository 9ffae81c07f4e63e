"""Auxiliary fields ``v: K -> R^m`` sampled on the grid, and their random models."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ValidationError
from .family import SampledDomain


@dataclass(frozen=True)
class AuxiliaryField:
    """Cell samples ``values[c, i] = v_i(x_c)``.

    ``provenance`` is a short tag such as ``"user"``, ``"random_seed(7)"``
    or ``"perturbed_from(random_seed(7))"``.
    """

    values: np.ndarray
    provenance: str = "user"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError(f"field must have shape (cells, m), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def permuted(self, perm) -> "AuxiliaryField":
        return AuxiliaryField(self.values[:, list(perm)], self.provenance)


def as_field(field) -> AuxiliaryField:
    return field if isinstance(field, AuxiliaryField) else AuxiliaryField(field)


def fourier_modes(d: int, k_max: int) -> np.ndarray:
    """All integer wave vectors in ``{-k_max..k_max}^d``."""
    return np.array(list(product(range(-k_max, k_max + 1), repeat=d)), dtype=float).reshape(-1, d)


def sample_field(dom: SampledDomain, m: int, model: dict, seed: int) -> AuxiliaryField:
    """Draw a random field.

    ``model`` is ``{"name": "iid_gaussian", "sigma": s}`` or
    ``{"name": "smooth_fourier", "k_max": k, "sigma": s}``.  The smooth model
    is ``sigma * sum_k (a_k cos 2pi k.x + b_k sin 2pi k.x)`` over
    ``k in {-k_max..k_max}^d`` with standard normal ``a_k, b_k``, so its
    pointwise variance is exactly ``sigma^2 (2 k_max + 1)^d``.
    """
    name = model.get("name")
    sigma = float(model.get("sigma", 1.0))
    rng = np.random.default_rng(seed)
    if name == "iid_gaussian":
        values = sigma * rng.standard_normal((dom.n_cells, m))
    elif name == "smooth_fourier":
        k_max = int(model.get("k_max", 3))
        modes = fourier_modes(dom.d, k_max)
        coef = rng.standard_normal((2, modes.shape[0], m))
        phase = 2 * np.pi * dom.points @ modes.T
        values = sigma * (np.cos(phase) @ coef[0] + np.sin(phase) @ coef[1])
    else:
        raise ValidationError(f"unknown field model {name!r}")
    return AuxiliaryField(values, f"random_seed({seed})")
