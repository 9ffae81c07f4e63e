import numpy as np
import pytest

from lyapdec import builtins
from lyapdec.family import FunctionFamily, MomentTarget, build_domain, compute_alpha
from lyapdec.fields import AuxiliaryField, sample_field


def random_instance(seed, d=None, m=None, n=None, cells_per_axis=None, max_cells=1024,
                    model="smooth_fourier"):
    """Random smooth family, random relaxed density and random field."""
    rng = np.random.default_rng(seed)
    d = d or int(rng.integers(1, 3))
    m = m or int(rng.integers(2, 6))
    n = n or int(rng.integers(1, 4))
    if cells_per_axis is None:
        choices = [k for k in (4, 8, 16, 32, 64, 128, 256, 512, 1024) if k**d <= max_cells]
        cells_per_axis = int(rng.choice(choices))
    dom = build_domain(d, cells_per_axis)
    fam = builtins.random_family(dom, m=m, n=n, seed=seed)
    theta = builtins.density("random", dom, m, seed=seed + 1)
    target = compute_alpha(fam, theta, dom)
    field = sample_field(dom, m, {"name": model, "k_max": 3}, [seed, 99])
    return dom, fam, target, field


def demo_fixture(cells):
    """``f_1 = 1, f_2 = 0``, ``v = (x, 0)``, ``alpha = 1/2``."""
    dom = build_domain(1, cells)
    fam = builtins.demo_family(dom)
    field = builtins.field("ramp", dom, fam)
    return dom, fam, MomentTarget([0.5]), field


def collinear_fixture(cells=64):
    """``m = 2`` with ``v_1 - v_2 = 2 (f_1 - f_2)`` everywhere."""
    dom = build_domain(1, cells)
    x = dom.points[:, 0]
    f = np.stack([np.stack([x, np.ones_like(x)], 1)[:, :1], np.zeros((cells, 1))], axis=1)
    fam = FunctionFamily(f)
    v = np.stack([2 * x, np.zeros(cells)], axis=1)
    return dom, fam, AuxiliaryField(v, "fixture")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
