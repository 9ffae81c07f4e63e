import json

import numpy as np
import pytest

from lyapdec import builtins, tables
from lyapdec.cli import (EXIT_INFEASIBLE, EXIT_INVALID, EXIT_IO, EXIT_NONCONVERGED, EXIT_OK,
                         cmd_decompose, main, make_config)
from lyapdec.errors import ValidationError
from lyapdec.family import build_domain


def _write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def _demo(tmp_path, **extra):
    cfg = {"format_version": 1, "domain": {"d": 1, "cells_per_axis": 64},
           "family": {"builtin": "demo"}, "alpha": [0.5], "field": {"builtin": "ramp"},
           "output": {"dir": str(tmp_path / "out")}}
    cfg.update(extra)
    return cfg


def test_decompose_demo(tmp_path):
    code = main(["decompose", str(_write(tmp_path, _demo(tmp_path)))])
    assert code == EXIT_OK
    out = tmp_path / "out"
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "ok"
    assert rep["dual"]["lambda_star"] == pytest.approx([0.5])
    assert rep["partition"]["moment_error"] <= 1e-12
    part = tables.read_partition_csv(out / "partition.csv")
    assert part.assignment[:32].tolist() == [0] * 32
    for name in ("plot_data.csv", "partition.png", "dual.png"):
        assert (out / name).stat().st_size > 0


def test_no_figures_flag(tmp_path):
    main(["decompose", str(_write(tmp_path, _demo(tmp_path))), "--no-figures"])
    assert not (tmp_path / "out" / "partition.png").exists()
    assert (tmp_path / "out" / "partition.csv").exists()


def test_infeasible_exit_code(tmp_path):
    cfg = _demo(tmp_path, alpha=[2.0], domain={"d": 1, "cells_per_axis": 2})
    assert main(["decompose", str(_write(tmp_path, cfg))]) == EXIT_INFEASIBLE
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["status"] == "infeasible"
    assert rep["feasibility"]["hull_distance_l1"] == pytest.approx(1.0)


def test_oracle_reports_hull_distance(tmp_path):
    cfg = _demo(tmp_path, alpha=[-0.25])
    assert main(["oracle", str(_write(tmp_path, cfg))]) == EXIT_INFEASIBLE
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["oracle"]["hull_distance_l1"] == pytest.approx(0.25)


def test_nonconverged_exit_code(tmp_path):
    cfg = _demo(tmp_path, solver={"max_iter": 1})
    assert main(["decompose", str(_write(tmp_path, cfg))]) == EXIT_NONCONVERGED


def test_missing_file_exit_code(tmp_path):
    assert main(["decompose", str(tmp_path / "nope.json")]) == EXIT_IO


def test_missing_table_exit_code(tmp_path):
    cfg = _demo(tmp_path, family={"table": "nope.csv"})
    assert main(["decompose", str(_write(tmp_path, cfg))]) == EXIT_IO


@pytest.mark.parametrize("patch", [
    {"format_version": 2},
    {"theta_bar": {"builtin": "uniform"}},          # both theta_bar and alpha
    {"alpha": [0.5, 0.5]},
    {"solver": {"tol_tie": -1}},
    {"solver": {"bogus": 1}},
    {"family": {"builtin": "nope"}},
])
def test_invalid_config_exit_code(tmp_path, patch):
    assert main(["decompose", str(_write(tmp_path, _demo(tmp_path, **patch)))]) == EXIT_INVALID


def test_usage_error_exit_code():
    assert main(["frobnicate"]) == EXIT_INVALID


def test_exactly_one_target():
    raw = {"format_version": 1, "family": {"builtin": "demo"}}
    with pytest.raises(ValidationError):
        make_config("decompose", raw)


def test_flags_override_config(tmp_path):
    p = _write(tmp_path, _demo(tmp_path))
    assert main(["decompose", str(p), "--grid", "16", "--seed", "4", "--tol-tie", "1e-9",
                 "--out", str(tmp_path / "o2"), "--no-figures"]) == EXIT_OK
    rep = json.loads((tmp_path / "o2" / "report.json").read_text())
    assert rep["grid"]["cells"] == 16
    assert rep["seed"] == 4
    assert rep["config"]["solver"]["tol_tie"] == 1e-9


def test_table_inputs(tmp_path):
    dom = build_domain(1, 32)
    fam = builtins.random_family(dom, m=3, n=2, seed=2)
    theta = builtins.density("random", dom, 3, seed=1)
    tables.write_family_csv(tmp_path / "fam.csv", fam)
    tables.write_density_csv(tmp_path / "theta.csv", theta)
    cfg = {"format_version": 1, "domain": {"d": 1, "cells_per_axis": 32},
           "family": {"table": "fam.csv"}, "theta_bar": {"table": "theta.csv"},
           "field": {"model": {"name": "iid_gaussian"}, "seed": 3},
           "output": {"dir": str(tmp_path / "out"), "figures": False}}
    assert main(["decompose", str(_write(tmp_path, cfg))]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["partition"]["moment_error"] <= 1e-10
    assert rep["partition"]["fractional_cells"] <= 2


def test_countable_decompose(tmp_path):
    cfg = {"format_version": 1, "domain": {"d": 1, "cells_per_axis": 32},
           "family": {"countable": "geometric", "eps_tail": 1e-3},
           "output": {"dir": str(tmp_path / "out"), "figures": False}}
    rep = cmd_decompose(make_config("decompose", cfg))
    assert rep["countable"]["truncation_index"] == 10
    assert rep["countable"]["tail_error"] == 2.0**-10
    assert abs(rep["partition"]["moment"][0] - 1 / 3) <= 1e-8 + rep["countable"]["tail_error"]
    assert abs(rep["partition"]["moment"][0] - 1 / 3) <= rep["countable"]["moment_error_bound"]


def test_countable_violation_is_invalid(tmp_path):
    cfg = {"format_version": 1, "family": {"countable": "nondecaying", "i_max": 100},
           "output": {"dir": str(tmp_path / "out")}}
    assert main(["decompose", str(_write(tmp_path, cfg))]) == EXIT_INVALID


def test_nongeneric_field_is_perturbed(tmp_path):
    cfg = {"format_version": 1, "domain": {"d": 1, "cells_per_axis": 64},
           "family": {"builtin": "random", "params": {"m": 3, "n": 1, "seed": 1}},
           "theta_bar": {"builtin": "uniform"}, "field": {"builtin": "zero"},
           "output": {"dir": str(tmp_path / "out"), "figures": False}}
    rep = cmd_decompose(make_config("decompose", cfg))
    assert rep["genericity"]["generic"] is False
    assert rep["genericity"]["perturbed"] and rep["genericity"]["generic_after"]
    assert rep["genericity"]["sup_change"] < rep["genericity"]["eta"]
    assert rep["partition"]["moment_error"] <= 1e-10


@pytest.mark.parametrize("command", ["probe", "detect", "perturb", "alpha", "oracle"])
def test_other_commands_run(tmp_path, command):
    cfg = {"format_version": 1, "domain": {"d": 2, "cells_per_axis": 8},
           "family": {"builtin": "random", "params": {"m": 3, "n": 2, "seed": 5}},
           "theta_bar": {"builtin": "uniform"},
           "field": {"model": {"name": "smooth_fourier", "k_max": 2}, "seed": 1},
           "probe": {"trials": 3}, "detect": {"pair": [1, 3]},
           "output": {"dir": str(tmp_path / "out")}}
    assert main([command, str(_write(tmp_path, cfg))]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["command"] == command and rep["status"] == "ok"


def test_detect_collinear_pair(tmp_path):
    dom = build_domain(1, 32)
    x = dom.points[:, 0]
    fam = np.zeros((32, 2, 1))
    fam[:, 0, 0] = x
    from lyapdec.family import FunctionFamily
    from lyapdec.fields import AuxiliaryField
    tables.write_family_csv(tmp_path / "f.csv", FunctionFamily(fam))
    tables.write_field_csv(tmp_path / "v.csv", AuxiliaryField(np.stack([2 * x, 0 * x], 1)))
    cfg = {"format_version": 1, "domain": {"d": 1, "cells_per_axis": 32},
           "family": {"table": "f.csv"}, "field": {"table": "v.csv"}, "detect": {"pair": [1, 2]},
           "output": {"dir": str(tmp_path / "out")}}
    assert main(["detect", str(_write(tmp_path, cfg))]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["detect"]["reports"][0]["lambda_hat"] == [2.0]
    assert rep["detect"]["generic"] is False


def test_report_and_partition_round_trip(tmp_path):
    from lyapdec.cli import build_instance
    from lyapdec.dual import verify_partition
    cfg = {"format_version": 1, "domain": {"d": 2, "cells_per_axis": 16},
           "family": {"builtin": "random", "params": {"m": 4, "n": 3, "seed": 2}},
           "theta_bar": {"builtin": "random", "params": {"seed": 3}},
           "field": {"model": {"name": "smooth_fourier"}, "seed": 4},
           "output": {"dir": str(tmp_path / "out"), "figures": False}}
    rc = make_config("decompose", cfg)
    rep = cmd_decompose(rc)
    text = (json.dumps(rep))
    assert json.loads(text) == rep
    inst = build_instance(rc)
    part = tables.read_partition_csv(tmp_path / "out" / "partition.csv")
    again = verify_partition(part, inst.family, inst.target, inst.dom)
    assert again.moment_error == rep["partition"]["moment_error"]
    assert again.fractional_count == rep["partition"]["fractional_cells"]


def test_probe_reports_both_models(tmp_path):
    cfg = _demo(tmp_path, probe={"trials": 4})
    p = _write(tmp_path, cfg)
    assert main(["probe", str(p), "--no-figures"]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert [s["model"]["name"] for s in rep["probe"]] == ["smooth_fourier", "iid_gaussian"]
    assert main(["probe", str(p), "--model", "iid_gaussian"]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert [s["model"]["name"] for s in rep["probe"]] == ["iid_gaussian"]
    assert (tmp_path / "out" / "probe_iid_gaussian.png").exists()
