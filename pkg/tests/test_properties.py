"""Invariants that must hold on arbitrary small instances."""

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from lyapdec.dual import dual_subgradient, dual_value, maximize_dual, recover_bang_bang, verify_partition
from lyapdec.family import FunctionFamily, RelaxedDensity, build_domain, compute_alpha
from lyapdec.fields import AuxiliaryField
from lyapdec.oracle import build_discrete_lp, simplex_solve

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def instances(draw):
    cells = draw(st.sampled_from([4, 8, 16, 32]))
    m = draw(st.integers(2, 4))
    n = draw(st.integers(1, 3))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    dom = build_domain(1, cells)
    fam = FunctionFamily(rng.normal(size=(cells, m, n)))
    theta = RelaxedDensity(rng.dirichlet(np.ones(m), size=cells))
    field = AuxiliaryField(rng.normal(size=(cells, m)))
    return dom, fam, compute_alpha(fam, theta, dom), field, rng


@SETTINGS
@given(instances())
def test_weak_duality(inst):
    dom, fam, target, field, rng = inst
    primal = simplex_solve(build_discrete_lp(fam, target, field, dom)).objective_value
    for lam in rng.normal(scale=3.0, size=(10, fam.n)):
        assert dual_value(lam, fam, field, target, dom) <= primal + 1e-10 * (1 + abs(primal))


@SETTINGS
@given(instances())
def test_recovery_matches_alpha_and_oracle(inst):
    dom, fam, target, field, _ = inst
    cert = maximize_dual(fam, field, target, dom)
    part = recover_bang_bang(cert, fam, field, target, dom)
    rep = verify_partition(part, fam, target, dom, field)
    sol = simplex_solve(build_discrete_lp(fam, target, field, dom))
    assert rep.moment_error <= 1e-8 * (1 + np.linalg.norm(target.alpha))
    assert rep.fractional_count <= fam.n
    assert sol.fractional_cells <= fam.n
    assert abs(rep.objective - sol.objective_value) <= 1e-8 * (1 + abs(sol.objective_value))


@SETTINGS
@given(instances(), st.permutations(range(4)))
def test_relabeling_invariance(inst, perm):
    dom, fam, target, field, _ = inst
    perm = [p for p in perm if p < fam.m]
    base = simplex_solve(build_discrete_lp(fam, target, field, dom)).objective_value
    other = simplex_solve(build_discrete_lp(fam.permuted(perm), target, field.permuted(perm), dom))
    assert abs(other.objective_value - base) <= 1e-9 * (1 + abs(base))


@SETTINGS
@given(instances())
def test_supergradient_inequality(inst):
    dom, fam, target, field, rng = inst
    lam, mu = rng.normal(size=(2, fam.n))
    g = dual_subgradient(lam, fam, field, target, dom)
    lhs = dual_value(mu, fam, field, target, dom)
    rhs = dual_value(lam, fam, field, target, dom) + g @ (mu - lam)
    assert lhs <= rhs + 1e-12


@SETTINGS
@given(instances(), st.floats(-5, 5))
def test_constant_shift_of_field_shifts_value(inst, c):
    dom, fam, target, field, _ = inst
    base = simplex_solve(build_discrete_lp(fam, target, field, dom)).objective_value
    shifted = simplex_solve(build_discrete_lp(fam, target, AuxiliaryField(field.values + c), dom))
    assert abs(shifted.objective_value - (base + c)) <= 1e-9 * (1 + abs(base) + abs(c))
