"""CSV formats for families, densities, fields and partitions.

Cell indices are 0-based (grid order of :func:`build_domain`); family
indices are 1-based in every file.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dual import Partition
from .errors import ValidationError
from .family import FunctionFamily, RelaxedDensity
from .fields import AuxiliaryField


def _fmt(x) -> str:
    return repr(float(x))


def _rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[c.strip() for c in row] for row in reader if row]
    return header, rows


def write_family_csv(path, family: FunctionFamily):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_index", "i"] + [f"f_{k + 1}" for k in range(family.n)])
        for c in range(family.n_cells):
            for i in range(family.m):
                w.writerow([c, i + 1] + [_fmt(x) for x in family.values[c, i]])


def read_family_csv(path, n_cells: int) -> FunctionFamily:
    header, rows = _rows(path)
    if header[:2] != ["cell_index", "i"] or len(header) < 3:
        raise ValidationError(f"{path}: family header must be 'cell_index, i, f_1..f_n'")
    n = len(header) - 2
    m = max(int(r[1]) for r in rows) if rows else 0
    values = np.full((n_cells, m, n), np.nan)
    for r in rows:
        c, i = int(r[0]), int(r[1])
        if not (0 <= c < n_cells and 1 <= i <= m):
            raise ValidationError(f"{path}: row {r[:2]} out of range")
        values[c, i - 1] = [float(x) for x in r[2:]]
    if np.isnan(values).any():
        raise ValidationError(f"{path}: family table is missing (cell, i) rows")
    return FunctionFamily(values, source=f"table:{Path(path).name}")


def _write_matrix(path, prefix, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_index"] + [f"{prefix}_{k + 1}" for k in range(values.shape[1])])
        for c, row in enumerate(values):
            w.writerow([c] + [_fmt(x) for x in row])


def _read_matrix(path, prefix, n_cells):
    header, rows = _rows(path)
    if header[0] != "cell_index" or not all(h.startswith(prefix + "_") for h in header[1:]):
        raise ValidationError(f"{path}: header must be 'cell_index, {prefix}_1..'")
    values = np.full((n_cells, len(header) - 1), np.nan)
    for r in rows:
        c = int(r[0])
        if not 0 <= c < n_cells:
            raise ValidationError(f"{path}: cell index {c} out of range")
        values[c] = [float(x) for x in r[1:]]
    if np.isnan(values).any():
        raise ValidationError(f"{path}: missing cells")
    return values


def write_density_csv(path, density: RelaxedDensity):
    _write_matrix(path, "theta", density.weights)


def read_density_csv(path, n_cells: int) -> RelaxedDensity:
    return RelaxedDensity(_read_matrix(path, "theta", n_cells))


def write_field_csv(path, field: AuxiliaryField):
    _write_matrix(path, "v", field.values)


def read_field_csv(path, n_cells: int) -> AuxiliaryField:
    return AuxiliaryField(_read_matrix(path, "v", n_cells), f"user:{Path(path).name}")


def write_partition_csv(path, p: Partition):
    """``cell_index, assigned_i, frac_theta_1..m``; extremal cells leave the
    fraction columns empty, fractional cells leave ``assigned_i`` empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_index", "assigned_i"] + [f"frac_theta_{k + 1}" for k in range(p.m)])
        for c, a in enumerate(p.assignment):
            if a >= 0:
                w.writerow([c, int(a) + 1] + [""] * p.m)
            else:
                w.writerow([c, ""] + [_fmt(x) for x in p.fractional[c]])


def read_partition_csv(path) -> Partition:
    header, rows = _rows(path)
    if header[:2] != ["cell_index", "assigned_i"]:
        raise ValidationError(f"{path}: header must be 'cell_index, assigned_i, frac_theta_1..m'")
    m = len(header) - 2
    assignment = np.full(len(rows), -1, dtype=np.int64)
    fractional = {}
    for r in rows:
        c = int(r[0])
        if r[1]:
            assignment[c] = int(r[1]) - 1
        else:
            fractional[c] = np.array([float(x) for x in r[2:]])
    return Partition(assignment, m, fractional)


def write_plot_data(path, dom, p: Partition, margin_gap):
    """Per-cell centres, assigned index and the gap between the two smallest
    dual margins (zero on tie cells)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_index"] + [f"x_{k + 1}" for k in range(dom.d)] + ["assigned_i", "tie_margin"])
        for c in range(dom.n_cells):
            a = p.assignment[c]
            w.writerow([c] + [_fmt(x) for x in dom.points[c]]
                       + ["" if a < 0 else int(a) + 1, _fmt(margin_gap[c])])
