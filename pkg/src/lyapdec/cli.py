"""Command-line entry point.

Every subcommand reads a JSON run config (``format_version: 1``, documented
in ``docs/config.md``), writes ``report.json`` plus CSV tables and figures to
the output directory, and exits with

    0  success
    1  invalid config or inputs
    2  alpha outside the reachable moment set
    3  dual maximization did not converge or could not be recovered
    4  file I/O failure
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import builtins, tables
from .dual import (DualConfig, margins, dual_value, maximize_dual, recover_bang_bang,
                   verify_partition)
from .errors import (CertificateInconsistent, HypothesisViolation, LyapdecError, NongenericOutput,
                     ValidationError)
from .family import (MomentTarget, build_domain, compute_alpha, truncate_countable,
                     truncate_density)
from .fields import AuxiliaryField, sample_field
from .generic import (DetectConfig, detect_degeneracy, is_generic, level_counts, lambda_grid,
                      pair_differences, perturb_to_generic, residuality_probe)
from .oracle import build_discrete_lp, phase1_feasible, simplex_solve

FORMAT_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_NONCONVERGED, EXIT_IO = 0, 1, 2, 3, 4


class CommandFailed(Exception):
    def __init__(self, code, message, report):
        super().__init__(message)
        self.code = code
        self.report = report


@dataclass
class RunConfig:
    command: str
    d: int
    cells_per_axis: int
    family: dict
    theta_bar: Optional[dict]
    alpha: Optional[list]
    field: Optional[dict]
    solver: dict
    genericity: dict
    perturb: dict
    probe: dict
    detect: dict
    seed: int
    out_dir: Path
    figures: bool = True
    base_dir: Path = field(default_factory=Path)

    def echo(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "domain": {"d": self.d, "cells_per_axis": self.cells_per_axis},
            "family": self.family,
            "theta_bar": self.theta_bar,
            "alpha": self.alpha,
            "field": self.field,
            "solver": self.solver,
            "genericity": self.genericity,
            "perturb": self.perturb,
            "probe": self.probe,
            "detect": self.detect,
            "seed": self.seed,
        }


SOLVER_DEFAULTS = {"tol_tie": 1e-8, "tol_feas": 1e-9, "box": 1e3, "max_iter": 500, "gap_tol": 1e-10}
GENERICITY_DEFAULTS = {"residual_tol": 1e-7, "trials": None, "measure_threshold": None}
PERTURB_DEFAULTS = {"eta": None, "N": 1.0, "eps": 1.0}
PROBE_DEFAULTS = {"trials": 200, "models": [{"name": "smooth_fourier", "k_max": 3, "sigma": 1.0},
                                             {"name": "iid_gaussian", "sigma": 1.0}]}
NEEDS_TARGET = {"decompose", "oracle", "probe"}


def _merge(defaults, given, name):
    given = dict(given or {})
    unknown = set(given) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown keys in '{name}': {sorted(unknown)}")
    out = dict(defaults)
    out.update(given)
    return out


def load_config(command: str, path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    return make_config(command, raw, overrides, base_dir=path.parent)


def make_config(command: str, raw: dict, overrides: Optional[dict] = None,
                base_dir: Path = Path(".")) -> RunConfig:
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if raw.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"config format_version must be {FORMAT_VERSION}")
    dom = raw.get("domain", {})
    solver = _merge(SOLVER_DEFAULTS, raw.get("solver"), "solver")
    probe = _merge(PROBE_DEFAULTS, raw.get("probe"), "probe")
    field_spec = raw.get("field")
    if "tol_tie" in overrides:
        solver["tol_tie"] = overrides["tol_tie"]
    if "tol_feas" in overrides:
        solver["tol_feas"] = overrides["tol_feas"]
    if "trials" in overrides:
        probe["trials"] = overrides["trials"]
    if "model" in overrides:
        picked = [mdl for mdl in probe["models"] if mdl.get("name") == overrides["model"]]
        probe["models"] = picked or [{"name": overrides["model"]}]
        if field_spec and "model" in field_spec:
            field_spec = dict(field_spec, model=dict(field_spec["model"], name=overrides["model"]))
    for key in ("tol_tie", "tol_feas", "box", "gap_tol"):
        if not float(solver[key]) > 0:
            raise ValidationError(f"solver.{key} must be positive")
    out = raw.get("output", {})
    cfg = RunConfig(
        command=command,
        d=int(dom.get("d", 1)),
        cells_per_axis=int(overrides.get("grid", dom.get("cells_per_axis", 64))),
        family=raw.get("family") or {"builtin": "demo"},
        theta_bar=raw.get("theta_bar"),
        alpha=raw.get("alpha"),
        field=field_spec,
        solver=solver,
        genericity=_merge(GENERICITY_DEFAULTS, raw.get("genericity"), "genericity"),
        perturb=_merge(PERTURB_DEFAULTS, raw.get("perturb"), "perturb"),
        probe=probe,
        detect=dict(raw.get("detect") or {}),
        seed=int(overrides.get("seed", raw.get("seed", 0))),
        out_dir=Path(overrides.get("out", out.get("dir", "out"))),
        figures=bool(out.get("figures", True)) and not overrides.get("no_figures", False),
        base_dir=Path(base_dir),
    )
    countable = "countable" in cfg.family
    if command in NEEDS_TARGET and not countable:
        if (cfg.theta_bar is None) == (cfg.alpha is None):
            raise ValidationError("provide exactly one of 'theta_bar' and 'alpha'")
    if countable and cfg.theta_bar is not None:
        raise ValidationError("countable families carry their own relaxed density")
    if command == "alpha" and cfg.theta_bar is None and not countable:
        raise ValidationError("the alpha command needs 'theta_bar'")
    return cfg


# -- instance assembly -------------------------------------------------------

@dataclass
class Instance:
    dom: object
    family: object
    target: Optional[MomentTarget]
    countable: Optional[dict] = None


def _path(cfg, p):
    p = Path(p)
    return p if p.is_absolute() else cfg.base_dir / p


def build_instance(cfg: RunConfig) -> Instance:
    dom = build_domain(cfg.d, cfg.cells_per_axis)
    spec = cfg.family
    countable = None
    if "countable" in spec:
        cspec = builtins.COUNTABLE[spec["countable"]](**spec.get("params", {}))
        family, tail = truncate_countable(cspec, dom, float(spec.get("eps_tail", 1e-3)),
                                          int(spec.get("i_max", 10_000)))
        theta, shift = truncate_density(cspec, family.m, dom)
        target = compute_alpha(family, theta, dom)
        countable = {"name": cspec.name, "truncation_index": family.m, "tail_error": tail,
                     "alpha_shift_bound": shift}
        return Instance(dom, family, target, countable)
    if "builtin" in spec:
        if spec["builtin"] not in builtins.FAMILIES:
            raise ValidationError(f"unknown builtin family {spec['builtin']!r}")
        family = builtins.FAMILIES[spec["builtin"]](dom, **spec.get("params", {}))
    elif "table" in spec:
        family = tables.read_family_csv(_path(cfg, spec["table"]), dom.n_cells)
    else:
        raise ValidationError("family needs one of 'builtin', 'table' or 'countable'")
    target = None
    if cfg.theta_bar is not None:
        tb = cfg.theta_bar
        if "table" in tb:
            theta = tables.read_density_csv(_path(cfg, tb["table"]), dom.n_cells)
        else:
            theta = builtins.density(tb.get("builtin", "uniform"), dom, family.m, **tb.get("params", {}))
        target = compute_alpha(family, theta, dom)
    elif cfg.alpha is not None:
        target = MomentTarget(cfg.alpha)
        if target.n != family.n:
            raise ValidationError(f"alpha has length {target.n}, family maps into R^{family.n}")
    return Instance(dom, family, target, countable)


def acquire_field(cfg: RunConfig, inst: Instance) -> AuxiliaryField:
    spec = cfg.field or {"builtin": "ramp"}
    if "table" in spec:
        v = tables.read_field_csv(_path(cfg, spec["table"]), inst.dom.n_cells)
        if v.m != inst.family.m:
            raise ValidationError(f"field has {v.m} components, family has {inst.family.m}")
        return v
    if "model" in spec:
        return sample_field(inst.dom, inst.family.m, spec["model"], int(spec.get("seed", cfg.seed)))
    return builtins.field(spec.get("builtin", "ramp"), inst.dom, inst.family, **spec.get("params", {}))


def _dual_cfg(cfg):
    s = cfg.solver
    return DualConfig(tol_tie=float(s["tol_tie"]), box=float(s["box"]), max_iter=int(s["max_iter"]),
                      gap_tol=float(s["gap_tol"]))


def _detect_cfg(cfg, seed=None):
    g = cfg.genericity
    return DetectConfig(float(g["residual_tol"]), g["trials"], cfg.seed if seed is None else seed,
                        g["measure_threshold"])


def _default_eta(cfg, v, n):
    # Jitter of width eta leaves roughly 2 * tol / eta of the cells within tol
    # of any one level, so eta = tol * cells / n keeps that near 2n / cells,
    # well under the 10n / cells genericity threshold.
    scale = max(1.0, float(np.abs(v.values).max()))
    tol = float(cfg.genericity["residual_tol"])
    return max(1e-6 * scale, tol * v.values.shape[0] / n)


def _floats(a):
    return [float(x) for x in np.atleast_1d(a)]


def _header(cfg, inst):
    rep = {"format_version": FORMAT_VERSION, "command": cfg.command, "config": cfg.echo(),
           "seed": cfg.seed}
    if inst is not None:
        rep["grid"] = {"d": inst.dom.d, "cells_per_axis": inst.dom.cells_per_axis,
                       "cells": inst.dom.n_cells, "m": inst.family.m, "n": inst.family.n}
        if inst.target is not None:
            rep["alpha"] = _floats(inst.target.alpha)
        if inst.countable is not None:
            rep["countable"] = {k: (float(v) if isinstance(v, float) else v)
                                for k, v in inst.countable.items()}
    return rep


def _check_feasible(cfg, inst, rep):
    feas = phase1_feasible(inst.family, inst.target, inst.dom, feas_tol=float(cfg.solver["tol_feas"]))
    rep["feasibility"] = {"feasible": feas.feasible, "hull_distance_l1": float(feas.distance),
                          "phase1_iterations": feas.iterations}
    if not feas.feasible:
        rep["status"] = "infeasible"
        raise CommandFailed(EXIT_INFEASIBLE,
                            f"alpha is outside the reachable moment set (l1 distance {feas.distance:.6g})",
                            rep)


def _figure(cfg, name):
    return cfg.out_dir / name if cfg.figures else None


# -- commands -------------------------------------------------------------

def cmd_alpha(cfg: RunConfig) -> dict:
    inst = build_instance(cfg)
    rep = _header(cfg, inst)
    rep["status"] = "ok"
    return rep


def cmd_oracle(cfg: RunConfig) -> dict:
    inst = build_instance(cfg)
    rep = _header(cfg, inst)
    v = acquire_field(cfg, inst)
    rep["field_provenance"] = v.provenance
    sol = simplex_solve(build_discrete_lp(inst.family, inst.target, v, inst.dom),
                        feas_tol=float(cfg.solver["tol_feas"]))
    rep["oracle"] = {"status": sol.status,
                     "objective_value": None if sol.theta is None else float(sol.objective_value),
                     "fractional_cells": int(sol.fractional_cells),
                     "iterations": int(sol.iterations),
                     "hull_distance_l1": float(sol.infeasibility)}
    if sol.status == "infeasible":
        rep["status"] = "infeasible"
        raise CommandFailed(EXIT_INFEASIBLE, "alpha is outside the reachable moment set", rep)
    rep["status"] = "ok" if sol.status == "optimal" else sol.status
    return rep


def cmd_decompose(cfg: RunConfig) -> dict:
    """alpha -> feasibility -> field -> genericity (perturb if needed) -> dual
    -> recovery -> verification."""
    inst = build_instance(cfg)
    dom, family, target = inst.dom, inst.family, inst.target
    rep = _header(cfg, inst)
    _check_feasible(cfg, inst, rep)
    v = acquire_field(cfg, inst)
    rep["field_provenance"] = v.provenance
    verdict = is_generic(v, family, dom, _detect_cfg(cfg))
    gen = {"generic": verdict.generic, "threshold": float(verdict.threshold),
           "worst": None if verdict.worst is None else verdict.worst.summary(),
           "constraint_degenerate_pairs": [[a + 1, b + 1] for a, b in verdict.constraint_degenerate_pairs],
           "perturbed": False}
    if not verdict.generic:
        p = cfg.perturb
        eta = _default_eta(cfg, v, family.n) if p["eta"] is None else p["eta"]
        try:
            v_new, plan = perturb_to_generic(v, pair_differences(family), float(eta), float(p["N"]),
                                             float(p["eps"]), dom, cfg.seed, _detect_cfg(cfg))
        except NongenericOutput as exc:
            gen["perturbation_error"] = str(exc)
        else:
            gen.update(perturbed=True, eta=float(eta), sup_change=float(np.abs(v_new.values - v.values).max()),
                       blocks_per_axis=plan.blocks_per_axis)
            v = v_new
            after = is_generic(v, family, dom, _detect_cfg(cfg))
            gen["generic_after"] = after.generic
            gen["worst_after"] = None if after.worst is None else after.worst.summary()
    rep["genericity"] = gen

    cert = maximize_dual(family, v, target, dom, _dual_cfg(cfg))
    rep["dual"] = cert.summary()
    if not cert.converged:
        rep["status"] = "nonconverged"
        raise CommandFailed(EXIT_NONCONVERGED, f"dual maximization stopped after {cert.iterations} "
                            f"iterations with gap {cert.upper_bound - cert.dual_value:.3e}", rep)
    try:
        part = recover_bang_bang(cert, family, v, target, dom)
    except CertificateInconsistent as exc:
        rep["status"] = "nonconverged"
        raise CommandFailed(EXIT_NONCONVERGED, str(exc), rep)
    check = verify_partition(part, family, target, dom, v)
    rep["partition"] = check.summary()
    rep["duality_gap"] = float(check.objective - cert.dual_value)
    if inst.countable is not None:
        # distance to the untruncated target: recovery error plus the shift
        # caused by dropping and renormalizing the density tail
        rep["countable"]["moment_error_bound"] = float(
            check.moment_error + inst.countable["alpha_shift_bound"])

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    tables.write_partition_csv(cfg.out_dir / "partition.csv", part)
    M = margins(cert.lambda_star, family, v)
    Ms = np.sort(M, axis=1)
    gap = Ms[:, 1] - Ms[:, 0] if family.m > 1 else np.full(dom.n_cells, np.inf)
    tables.write_plot_data(cfg.out_dir / "plot_data.csv", dom, part, gap)
    tables.write_field_csv(cfg.out_dir / "field.csv", v)
    files = {"partition": "partition.csv", "plot_data": "plot_data.csv", "field": "field.csv"}
    if cfg.figures:
        from .plotting import plot_dual_slices, plot_partition
        if plot_partition(dom, part, gap, cfg.out_dir / "partition.png"):
            files["partition_figure"] = "partition.png"
        plot_dual_slices(lambda lam: dual_value(lam, family, v, target, dom), cert.lambda_star,
                         cfg.out_dir / "dual.png")
        files["dual_figure"] = "dual.png"
    rep["files"] = files
    rep["status"] = "ok"
    return rep


def cmd_probe(cfg: RunConfig) -> dict:
    inst = build_instance(cfg)
    rep = _header(cfg, inst)
    _check_feasible(cfg, inst, rep)
    if not cfg.probe["models"]:
        raise ValidationError("probe.models must list at least one field model")
    rep["probe"], rep["trials"], files = [], {}, {}
    for model in cfg.probe["models"]:
        stats = residuality_probe(inst.family, inst.target, inst.dom, int(cfg.probe["trials"]),
                                  model, cfg.seed, _dual_cfg(cfg), _detect_cfg(cfg))
        rep["probe"].append(stats.summary())
        rep["trials"][model["name"]] = [t.summary() for t in stats.trials]
        if cfg.figures:
            from .plotting import plot_probe
            cfg.out_dir.mkdir(parents=True, exist_ok=True)
            name = f"probe_{model['name']}.png"
            plot_probe(stats, cfg.out_dir / name)
            files[model["name"]] = name
    if files:
        rep["files"] = files
    rep["status"] = "ok"
    return rep


def cmd_detect(cfg: RunConfig) -> dict:
    inst = build_instance(cfg)
    rep = _header(cfg, inst)
    v = acquire_field(cfg, inst)
    rep["field_provenance"] = v.provenance
    dcfg = _detect_cfg(cfg)
    if "pair" in cfg.detect:
        i1, i2 = cfg.detect["pair"]
        r = detect_degeneracy(v, inst.family, (i1 - 1, i2 - 1), inst.dom, dcfg)
        thr = dcfg.threshold(inst.family.n, inst.dom.n_cells)
        rep["detect"] = {"reports": [r.summary()], "generic": bool(r.inlier_measure < thr),
                         "threshold": float(thr)}
    else:
        verdict = is_generic(v, inst.family, inst.dom, dcfg)
        rep["detect"] = {"reports": [r.summary() for r in verdict.reports],
                         "generic": verdict.generic, "threshold": float(verdict.threshold)}
    rep["status"] = "ok"
    return rep


def cmd_perturb(cfg: RunConfig) -> dict:
    inst = build_instance(cfg)
    rep = _header(cfg, inst)
    v = acquire_field(cfg, inst)
    rep["field_provenance"] = v.provenance
    p = cfg.perturb
    eta = float(_default_eta(cfg, v, inst.family.n) if p["eta"] is None else p["eta"])
    diffs = pair_differences(inst.family)
    try:
        out, plan = perturb_to_generic(v, diffs, eta, float(p["N"]), float(p["eps"]), inst.dom,
                                       cfg.seed, _detect_cfg(cfg))
    except NongenericOutput as exc:
        rep["status"] = "nongeneric"
        rep["perturb"] = {"error": str(exc), "worst": exc.report.summary() if exc.report else None}
        raise CommandFailed(EXIT_NONCONVERGED, str(exc), rep)
    res = {"eta": eta, "N": float(p["N"]), "eps": float(p["eps"]),
           "sup_change": float(np.abs(out.values - v.values).max())}
    if plan is not None:
        lambdas = lambda_grid(plan.N, inst.family.n)
        counts = []
        for pair, g in diffs:
            blk, anc = level_counts(out.values[:, pair[0]] - out.values[:, pair[1]], g, plan, lambdas,
                                    float(cfg.solver["tol_tie"]))
            counts.append({"pair": [pair[0] + 1, pair[1] + 1], "max_per_block": blk,
                           "max_per_anchor": anc})
        res.update(blocks_per_axis=plan.blocks_per_axis, h=plan.h, level_counts=counts)
    rep["perturb"] = res
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    tables.write_field_csv(cfg.out_dir / "field.csv", out)
    rep["files"] = {"field": "field.csv"}
    rep["status"] = "ok"
    return rep


COMMANDS = {
    "decompose": cmd_decompose,
    "oracle": cmd_oracle,
    "probe": cmd_probe,
    "detect": cmd_detect,
    "perturb": cmd_perturb,
    "alpha": cmd_alpha,
}


def dump_report(rep: dict) -> str:
    return json.dumps(rep, indent=2, allow_nan=False) + "\n"


def run(command: str, cfg: RunConfig):
    """Execute one command; returns ``(exit_code, report)`` and writes ``report.json``."""
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        rep = COMMANDS[command](cfg)
    except CommandFailed as exc:
        code, rep = exc.code, exc.report
        rep["error"] = str(exc)
    rep["timings"] = {"total_seconds": time.perf_counter() - t0}
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "report.json").write_text(dump_report(rep))
    return code, rep


def _parser():
    p = argparse.ArgumentParser(prog="lyapdec", description="Bang-bang moment decompositions.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", help="JSON run config")
        s.add_argument("--grid", type=int, help="cells per axis")
        s.add_argument("--seed", type=int)
        s.add_argument("--tol-tie", type=float)
        s.add_argument("--tol-feas", type=float)
        s.add_argument("--trials", type=int)
        s.add_argument("--model", choices=["iid_gaussian", "smooth_fourier"])
        s.add_argument("--out", help="output directory")
        s.add_argument("--no-figures", action="store_true")
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    overrides = {"grid": args.grid, "seed": args.seed, "tol_tie": args.tol_tie,
                 "tol_feas": args.tol_feas, "trials": args.trials, "model": args.model,
                 "out": args.out, "no_figures": args.no_figures or None}
    try:
        cfg = load_config(args.command, args.config, overrides)
        code, rep = run(args.command, cfg)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"lyapdec: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LyapdecError, KeyError, TypeError, ValueError) as exc:
        kind = "hypothesis violated" if isinstance(exc, HypothesisViolation) else "invalid input"
        print(f"lyapdec: {kind}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    status = rep.get("status", "ok")
    print(f"{args.command}: {status} -> {cfg.out_dir / 'report.json'}")
    if code != EXIT_OK:
        print(f"lyapdec: {rep.get('error', status)}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
