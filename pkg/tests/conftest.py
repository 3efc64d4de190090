import math
import sys

import numpy as np
import pytest

from crtube.jets import Jet1
from crtube.maparam import PQData

FLAT = '{"kind":"explicit","rho":"t1^2/(2*(1-t2))"}'
WITNESS = '{"kind":"parametric","p":"v^2/2+v^3/6","q":"v"}'

# Fourth-order accurate central-difference stencils, offset -> weight
# (divide by h^order).  The classic second-order stencils leave a truncation
# error of order h^2 f^(5) ~ 1e-5 for third derivatives at h = 1e-3.
_STENCILS = {
    0: {0: 1.0},
    1: {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12},
    2: {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12},
    3: {-3: 1 / 8, -2: -1.0, -1: 13 / 8, 1: -13 / 8, 2: 1.0, 3: -1 / 8},
}


def fd_partial(f, x, y, i, j, h=1e-3):
    """Finite-difference d^(i+j) f / dx^i dy^j at (x, y)."""
    total = 0.0
    for a, ca in _STENCILS[i].items():
        for b, cb in _STENCILS[j].items():
            total += ca * cb * f(x + a * h, y + b * h)
    return total / h ** (i + j)


def fd_derivative(f, x, k, h=1e-3):
    return sum(c * f(x + a * h) for a, c in _STENCILS[k].items()) / h**k


def random_pq(rng, p_degree=9, q_degree=8, size=0.3):
    """Polynomial (p, q) jets at 0 with p(0) = q(0) = 0, q'(0) > 0 and p''(0) far from 0."""
    p = np.zeros(p_degree + 1)
    q = np.zeros(q_degree + 1)
    p[1] = rng.normal()
    p[2] = math.copysign(rng.uniform(0.3, 1.0), rng.normal())
    p[3:] = size * rng.normal(size=p_degree - 2)
    q[1] = rng.uniform(0.5, 1.5)
    q[2:] = size * rng.normal(size=q_degree - 1)
    return PQData(Jet1(p), Jet1(q))


def random_vw(rng, pq, n, v_box=0.1, w_box=0.1):
    """Chart points where ``q' - w p''`` stays well away from 0."""
    out = []
    while len(out) < n:
        v, w = rng.uniform(-v_box, v_box), rng.uniform(-w_box, w_box)
        loc = pq.at(v)
        if loc.q.derivative(1) - w * loc.p.derivative(2) > 0.2:
            out.append((v, w))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
