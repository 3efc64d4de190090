import json

import numpy as np
import pytest

from crtube.errors import DegreeExhausted, SchemaError
from crtube.surface import (
    SamplePoint,
    admissibility,
    grid_points,
    load_spec,
    ma_residual,
    random_points,
    rho_jet,
    rho_value,
    s_invariant,
    spec_from_dict,
)

from .conftest import FLAT, WITNESS


def explicit(rho, **extra):
    return spec_from_dict({"kind": "explicit", "rho": rho, **extra})


# loading ------------------------------------------------------------------


def test_flat_example_has_zero_shift():
    assert load_spec(FLAT).shift == (0.0, 0.0, 0.0)


def test_shift_is_read_off():
    spec = explicit("1 + t1 + t1^2")
    assert spec.shift == pytest.approx((1.0, 1.0, 0.0))
    j = rho_jet(spec, (0.0, 0.0), 2)
    assert j.as_dict(1e-15) == pytest.approx({(2, 0): 1.0})


def test_normalization_idempotent():
    spec = explicit("3 - t1 + 2*t2 + t1^2/(2*(1-t2))")
    again = explicit(json.loads(json.dumps(spec.to_dict()))["rho"])
    # the echoed expression is the raw one; renormalising gives the same shift
    assert again.shift == pytest.approx(spec.shift)
    # an already normalised spec has zero shift
    assert explicit("t1^2/(2*(1-t2)) - t1^2/2 + t1^2/2").shift == (0.0, 0.0, 0.0)


def test_parametric_spec_valid():
    spec = load_spec('{"kind":"parametric","p":"v^2/2","q":"v"}')
    assert spec.kind == "parametric"
    assert spec.domain == {"v": (-0.2, 0.2), "w": (-0.1, 0.1)}


def test_default_domain():
    assert load_spec(FLAT).domain == {"t1": (-0.2, 0.2), "t2": (-0.2, 0.2)}


@pytest.mark.parametrize(
    "doc",
    [
        "not json",
        "[1, 2]",
        '{"kind":"explicit"}',
        '{"kind":"implicit","rho":"t1"}',
        '{"kind":"explicit","rho":"t1","p":"v"}',
        '{"kind":"parametric","p":"v"}',
        '{"kind":"explicit","rho":"t1","domain":{"t1":[1,0]}}',
        '{"kind":"explicit","rho":"t1","domain":{"v":[0,1]}}',
        '{"kind":"explicit","rho":"t1","domain":{"t1":[0]}}',
        '{"kind":"explicit","rho":"t1","tolerance":0}',
        '{"kind":"explicit","rho":"t1","extra":1}',
        '{"kind":"parametric","p":"v^2/2 + 1","q":"v"}',
        '{"kind":"parametric","p":"v^2/2","q":"-v"}',
    ],
)
def test_schema_errors(doc):
    with pytest.raises(SchemaError):
        load_spec(doc)


# jets -----------------------------------------------------------------------


def test_flat_rho_jet():
    j = rho_jet(load_spec(FLAT), (0.0, 0.0), 3)
    assert j.as_dict(1e-15) == pytest.approx({(2, 0): 0.5, (2, 1): 0.5})


def test_parametric_matches_explicit_at_origin():
    par = load_spec('{"kind":"parametric","p":"v^2/2","q":"v"}')
    a = rho_jet(par, (0.0, 0.0), 5)
    b = rho_jet(load_spec(FLAT), (0.0, 0.0), 5)
    assert a.allclose(b, atol=1e-12, rtol=0)


def test_kind_independence(rng):
    par = load_spec('{"kind":"parametric","p":"v^2/2","q":"v"}')
    flat = load_spec(FLAT)
    for sp in random_points(par, 50, rng):
        a = rho_jet(par, sp.point, 5, vw=sp.vw)
        b = rho_jet(flat, sp.point, 5)
        diff = max(abs(a[i, k] - b[i, k]) for i in range(6) for k in range(6 - i))
        assert diff <= 1e-9, sp
        # the scalar preimage solve gives the same jet as the chart shortcut
        assert rho_jet(par, sp.point, 5).allclose(a, atol=1e-12, rtol=0)


def test_rho_value_parametric():
    par = load_spec('{"kind":"parametric","p":"v^2/2","q":"v"}')
    t1, t2 = 0.08, 0.2
    assert rho_value(par, (t1, t2)) == pytest.approx(0.004, abs=1e-15)
    assert rho_value(par, (t1, t2), vw=(0.1, 0.2)) == pytest.approx(0.004, abs=1e-15)


def test_grid_points_order_and_mapping():
    par = load_spec('{"kind":"parametric","p":"v^2/2","q":"v","domain":{"v":[-0.1,0.1],"w":[0,0.2]}}')
    pts = grid_points(par, (3, 2))
    assert [sp.vw for sp in pts] == [(-0.1, 0.0), (-0.1, 0.2), (0.0, 0.0), (0.0, 0.2), (0.1, 0.0), (0.1, 0.2)]
    for sp in pts:
        v, w = sp.vw
        assert sp.t1 == pytest.approx(v * (1 - w)) and sp.t2 == w
    flat = grid_points(load_spec(FLAT), (2, 2))
    assert [sp.point for sp in flat] == [(-0.2, -0.2), (-0.2, 0.2), (0.2, -0.2), (0.2, 0.2)]


# Monge-Ampere residual and S ----------------------------------------------


def test_ma_residual_examples(rng):
    flat = load_spec(FLAT)
    for sp in random_points(flat, 20, rng):
        assert abs(ma_residual(rho_jet(flat, sp.point, 2))) <= 1e-12
    assert ma_residual(rho_jet(explicit("t1^2 + t2^2"), (0.0, 0.0), 2)) == pytest.approx(4.0)
    half = explicit("t1^2/2")
    for x, y in rng.uniform(-1, 1, size=(5, 2)):
        assert ma_residual(rho_jet(half, (x, y), 2)) == 0.0


def test_ma_residual_needs_degree_two():
    with pytest.raises(DegreeExhausted):
        ma_residual(rho_jet(load_spec(FLAT), (0.0, 0.0), 1))


def test_s_invariant_examples():
    assert s_invariant(rho_jet(load_spec(FLAT), (0.0, 0.0), 5)) == pytest.approx((1.0, 0.0), abs=1e-14)
    assert s_invariant(rho_jet(explicit("t1^2/2"), (0.0, 0.0), 5))[0] == 0.0
    assert s_invariant(rho_jet(load_spec(WITNESS), (0.0, 0.0), 5)) == pytest.approx((1.0, 1.0), abs=1e-12)


def test_s_invariant_flat_closed_form(rng):
    # rho_12 / rho_11 = t1 / (1 - t2), so S = 1/(1 - t2) and S_1 = 0
    flat = load_spec(FLAT)
    for x, y in rng.uniform(-0.2, 0.2, size=(10, 2)):
        S, S1 = s_invariant(rho_jet(flat, (x, y), 4))
        assert S == pytest.approx(1 / (1 - y), rel=1e-13)
        assert abs(S1) <= 1e-12


def test_parametric_ma_residual_vanishes(rng):
    for doc in [WITNESS, '{"kind":"parametric","p":"pow(1+v, 1/2)*4 - 4 - 2*v","q":"v + v^2"}']:
        spec = load_spec(doc)
        for sp in grid_points(spec, (7, 7)) + random_points(spec, 20, rng):
            assert abs(ma_residual(rho_jet(spec, sp.point, 2, vw=sp.vw))) <= 1e-10


# admissibility ------------------------------------------------------------


def test_admissibility_flat():
    rep = admissibility(load_spec(FLAT), tol=1e-9)
    assert rep.levi_rank1 and rep.two_nondegenerate
    assert rep.region["points"] == 441
    assert rep.max_ma_residual <= 1e-12


def test_admissibility_levi_nondegenerate():
    rep = admissibility(explicit("t1^2 + t2^2"))
    assert not rep.levi_rank1
    assert rep.max_ma_residual == pytest.approx(4.0)


def test_admissibility_two_degenerate():
    rep = admissibility(explicit("t1^2/2"))
    assert rep.levi_rank1 and not rep.two_nondegenerate


def test_admissibility_records_failed_points():
    spec = explicit("t1^2/(2*(1-t2))", domain={"t1": [-0.2, 0.2], "t2": [0.5, 1.0]})
    rep = admissibility(spec, grid_points(spec, (3, 3)))
    assert not rep.levi_rank1
    errors = [s for s in rep.samples if "error" in s]
    assert len(errors) == 3 and all(s["t2"] == 1.0 for s in errors)
    assert rep.to_dict()["max_ma_residual"] is not None


def test_sample_point_point():
    assert SamplePoint(1.0, 2.0).point == (1.0, 2.0)
    assert np.isclose(SamplePoint(1.0, 2.0, (0.5, 2.0)).vw[0], 0.5)
