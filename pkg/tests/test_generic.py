import numpy as np
import pytest

from lyapdec import builtins
from lyapdec.errors import NongenericOutput, ValidationError
from lyapdec.family import FunctionFamily, build_domain
from lyapdec.fields import AuxiliaryField, sample_field
from lyapdec.generic import (DetectConfig, choose_blocks, detect_degeneracy, is_generic,
                             lambda_grid, level_counts, pair_differences, perturb_to_generic,
                             residuality_probe, trial_seed)

from conftest import collinear_fixture, demo_fixture, random_instance


def test_collinear_fixture_is_caught_exactly():
    dom, fam, field = collinear_fixture()
    rep = detect_degeneracy(field, fam, (0, 1), dom)
    assert rep.lambda_hat.tolist() == [2.0]
    assert rep.inlier_measure == 1.0
    assert not is_generic(field, fam, dom)


def test_collinear_on_half_the_cells():
    dom, fam, field = collinear_fixture(64)
    v = field.values.copy()
    v[32:, 0] += np.linspace(0.1, 1.0, 32) ** 2
    rep = detect_degeneracy(AuxiliaryField(v), fam, (0, 1), dom)
    assert rep.lambda_hat[0] == pytest.approx(2.0)
    assert rep.inlier_measure == pytest.approx(0.5)


def test_rank_deficient_difference():
    # g has two identical columns; lam is only determined up to its null space
    dom = build_domain(1, 32)
    x = dom.points[:, 0]
    f = np.zeros((32, 2, 2))
    f[:, 0, 0] = f[:, 0, 1] = x
    fam = FunctionFamily(f)
    v = np.stack([3 * x, np.zeros(32)], axis=1)
    rep = detect_degeneracy(AuxiliaryField(v), fam, (0, 1), dom)
    assert rep.inlier_measure == 1.0
    assert rep.lambda_hat.sum() == pytest.approx(3.0)


def test_constraint_degenerate_pair():
    dom = build_domain(1, 16)
    fam = builtins.identical_pair_family(dom, m=3, n=1)
    v = builtins.field("equal", dom, fam)
    rep = detect_degeneracy(v, fam, (0, 1), dom)
    assert rep.constraint_degenerate
    assert rep.lambda_hat is None
    assert rep.inlier_measure == 1.0
    assert (0, 1) in is_generic(v, fam, dom).constraint_degenerate_pairs


def test_random_field_is_generic():
    dom, fam, _, field = random_instance(11, d=2, m=3, n=2, cells_per_axis=16)
    verdict = is_generic(field, fam, dom)
    assert verdict
    assert verdict.worst.inlier_measure < verdict.threshold


def test_detector_is_deterministic():
    dom, fam, _, field = random_instance(2, max_cells=256)
    a = detect_degeneracy(field, fam, (0, 1), dom, DetectConfig(seed=5))
    b = detect_degeneracy(field, fam, (0, 1), dom, DetectConfig(seed=5))
    assert a.summary() == b.summary()


def test_bad_pair_rejected():
    dom, fam, field = collinear_fixture(8)
    with pytest.raises(ValidationError):
        detect_degeneracy(field, fam, (1, 1), dom)
    with pytest.raises(ValidationError):
        detect_degeneracy(field, fam, (0, 2), dom)


def test_threshold_default():
    assert DetectConfig().threshold(2, 400) == pytest.approx(0.05)
    assert DetectConfig(measure_threshold=0.3).threshold(2, 400) == 0.3


def test_perturbation_repairs_collinear_fixture():
    dom, fam, field = collinear_fixture(64)
    eta = 1e-3
    out, plan = perturb_to_generic(field, pair_differences(fam), eta, 1.0, 1.0, dom, seed=0)
    assert np.max(np.abs(out.values - field.values)) < eta
    assert detect_degeneracy(out, fam, (0, 1), dom).inlier_measure < DetectConfig().threshold(1, 64)
    assert plan.blocks_per_axis ** dom.d >= 2


def test_perturbation_needs_enough_room():
    dom, fam, field = collinear_fixture(64)
    with pytest.raises(NongenericOutput):
        # a jitter this small cannot lift cells off the residual tolerance band
        perturb_to_generic(field, pair_differences(fam), 1e-9, 1.0, 1.0, dom, seed=0)


def test_choose_blocks():
    dom = build_domain(2, 12)
    k = choose_blocks(dom, n=2, eps=1.0)
    assert 12 % k == 0 and k**2 >= 3 and k**-2.0 < 0.25
    with pytest.raises(ValidationError):
        choose_blocks(build_domain(1, 7), n=3, eps=0.01)


def test_level_counts_count_cells_per_block():
    dom, fam, field = collinear_fixture(16)
    out, plan = perturb_to_generic(field, pair_differences(fam), 1e-3, 1.0, 1.0, dom, seed=1)
    w = out.values[:, 0] - out.values[:, 1]
    g = fam.values[:, 0] - fam.values[:, 1]
    blk, anc = level_counts(w, g, plan, lambda_grid(1.0, 1), 1e-8)
    assert blk <= 1 and anc <= 1
    # the unperturbed field lies exactly on lam = 2, outside [-1, 1]; on [-2, 2] all cells line up
    blk, _ = level_counts(field.values[:, 0], g, plan, lambda_grid(2.0, 1), 1e-8)
    assert blk == 16 // plan.blocks_per_axis


def test_lambda_grid_spacing():
    grid = lambda_grid(1.0, 2)
    assert grid.shape == (21 * 21, 2)
    assert np.allclose(np.diff(np.unique(grid[:, 0])), 0.1)


def test_probe_on_demo_family():
    dom, fam, target, _ = demo_fixture(32)
    stats = residuality_probe(fam, target, dom, 10, {"name": "smooth_fourier", "k_max": 2}, seed=3)
    assert stats.generic_fraction == 1.0
    assert stats.nonconverged == 0
    s = stats.summary()
    assert s["trials"] == 10 and s["max_fractional_cells"] <= 1


def test_trial_seeds_distinct():
    assert len({trial_seed(0, t) for t in range(100)}) == 100


def test_genericity_verdict_invariant_under_relabeling():
    for seed in range(4):
        dom, fam, _, field = random_instance(seed, max_cells=256)
        perm = np.random.default_rng(seed).permutation(fam.m)
        a = is_generic(field, fam, dom)
        b = is_generic(field.permuted(perm), fam.permuted(perm), dom)
        assert a.generic == b.generic
    dom, fam, field = collinear_fixture(32)
    assert not is_generic(field.permuted([1, 0]), fam.permuted([1, 0]), dom)
