import json
import math

import numpy as np
import pytest

from crtube.curvature import theta10_gamma0, theta21_gamma0
from crtube.errors import NoVertex, NotACone, NotLinearlyRelated, NotQuadratic, WrongSheet
from crtube.flatness import (
    CASES,
    AffineMap3,
    Quadric3,
    chi_reconstruct,
    classify,
    cone_to_lightcone,
    fit_cone,
    flat_family,
    flat_residuals_pq,
    normalization_map,
    recover_quadratic,
    recover_relation,
    sample_vs,
    verify_affine_equivalence,
)
from crtube.surface import base_point, grid_points, load_spec, random_points, rho_jet, spec_from_dict

from .conftest import FLAT, WITNESS

VS = np.linspace(-0.2, 0.2, 11)
SEEDS = {
    "Case1": (0.0, 0.0, 1.0),
    "Case2": (1.0, 2.0, 1.0),
    "Case3_C1zero": (0.0, 1.0, 1.0),
    "Case3_C1nonzero": (1.0, 0.0, 1.0),
}


def parametric(p, q, **extra):
    return spec_from_dict({"kind": "parametric", "p": p, "q": q, **extra})


def family(*seed, **kw):
    return spec_from_dict(flat_family(*seed, **kw))


def light_cone(x):
    x = np.asarray(x)
    return x[..., 0] ** 2 + x[..., 1] ** 2 - x[..., 2] ** 2


# residual gates -------------------------------------------------------------


def test_residuals_model():
    r1, r2 = flat_residuals_pq(parametric("v^2/2", "v").pq_source, VS)
    assert np.abs(r1).max() == 0.0 and np.abs(r2).max() == 0.0


def test_residual_r1_witness():
    r1, _ = flat_residuals_pq(load_spec(WITNESS).pq_source, [0.0])
    assert r1[0] == pytest.approx(1.0)


def test_residual_r2_case3a():
    # p'' = (1+v)^(-3/2), q = p'
    src = family(0.0, 1.0, 1.0).pq_source
    assert src.at(0.0).p.derivative(2) == pytest.approx(1.0)
    r1, r2 = flat_residuals_pq(src, np.linspace(-0.2, 0.2, 10))
    assert np.abs(r1).max() <= 1e-12 and np.abs(r2).max() <= 1e-10


# relation and quadratic recovery ------------------------------------------


def test_recover_relation_model():
    assert recover_relation(parametric("v^2/2", "v").pq_source, VS) == pytest.approx((1.0, 0.0))


def test_recover_relation_case3a():
    C, D = recover_relation(family(0.0, 1.0, 1.0).pq_source, VS)
    assert (C, D) == pytest.approx((1.0, 0.0), abs=1e-14)


def test_recover_relation_general_constants():
    C, D = recover_relation(family(0.0, 1.0, 2.0, C=-1.5, D=0.25).pq_source, VS)
    assert (C, D) == pytest.approx((-1.5, 0.25), rel=1e-12)


def test_not_linearly_related():
    with pytest.raises(NotLinearlyRelated) as info:
        recover_relation(parametric("v^2/2", "v + v^3").pq_source, VS)
    assert info.value.max_deviation > 1e-3


def test_recover_quadratic_examples():
    src = parametric("v^2/2", "v").pq_source
    assert recover_quadratic(src, 1.0, VS) == pytest.approx((0, 0, 1, 0), abs=1e-12)
    # p'' = (1+v)^(-3): h = (1+v)^2
    case2 = parametric("1/(2*(1+v)) + v/2 - 1/2", "1/2 - 1/(2*(1+v)^2)").pq_source
    assert recover_quadratic(case2, 1.0, VS) == pytest.approx((1, 2, 1, 0), abs=1e-10)
    # p'' = (1+v)^(-3/2): h = 1 + v
    case3a = parametric("4 + 2*v - 4*sqrt(1+v)", "2 - 2/sqrt(1+v)").pq_source
    assert recover_quadratic(case3a, 1.0, VS) == pytest.approx((0, 1, 1, 1), abs=1e-10)


def test_not_quadratic():
    with pytest.raises(NotQuadratic):
        recover_quadratic(parametric("v^2/2 + v^3/6", "v + v^2/2").pq_source, 1.0, VS)


@pytest.mark.parametrize(
    "seed, C, D",
    [
        ((0.0, 0.0, 2.0), 1.0, 0.0),
        ((1.0, 2.0, 1.0), 2.0, -0.5),
        ((0.5, 3.0, 4.5), 1.0, 0.0),
        ((0.0, -0.7, 1.3), 0.8, 1.0),
        ((1.0, 0.0, 1.0), 1.0, 0.0),
        ((2.0, 1.0, 0.5), -1.0, 0.2),
        ((-0.5, 1.0, 1.0), 1.0, 0.0),
    ],
)
def test_generator_round_trip(seed, C, D):
    src = family(*seed, C=C, D=D).pq_source
    got_C, got_D = recover_relation(src, VS)
    assert (got_C, got_D) == pytest.approx((C, D), rel=1e-10, abs=1e-12)
    C1, C2, C3, Delta = recover_quadratic(src, got_C, VS)
    assert (C1, C2, C3) == pytest.approx(seed, abs=1e-8)
    assert Delta == pytest.approx(seed[1] ** 2 - 4 * seed[0] * seed[2], abs=1e-8)


def test_flat_family_rejects_bad_seeds():
    with pytest.raises(ValueError):
        flat_family(0.0, 0.0, -1.0)
    with pytest.raises(ValueError):
        flat_family(0.0, 0.0, 1.0, C=0.0)


# chi reconstruction -------------------------------------------------------


def test_chi_model():
    rec = chi_reconstruct(parametric("v^2/2", "v").pq_source, 1.0, 0.0)
    assert rec.zeta.coeffs[:3] == pytest.approx([0.0, -1.0, 0.0], abs=1e-15)
    assert rec.chi.coeffs[:3] == pytest.approx([0.0, -0.5, 0.0], abs=1e-15)
    for t1, t2 in [(0.1, 0.2), (-0.15, -0.1), (0.05, 0.0)]:
        assert rec(t1, t2) == pytest.approx(t1**2 / (2 * (1 - t2)), abs=1e-15)


@pytest.mark.parametrize("case", CASES)
def test_chi_slope_and_value(case):
    src = family(*SEEDS[case]).pq_source
    C, D = recover_relation(src, VS)
    rec = chi_reconstruct(src, C, D)
    assert abs(rec.chi.value) <= 1e-14
    assert rec.chi.derivative(1) == pytest.approx(-1 / (2 * src.at(0.0).p.derivative(2)), rel=1e-12)


def test_chi_reconstruct_explicit_source():
    spec = load_spec(FLAT)
    rec = chi_reconstruct(spec.pq_source, 1.0, 0.0)
    for sp in random_points(spec, 10, np.random.default_rng(1)):
        assert rec(*sp.point) == pytest.approx(base_point(spec, sp)[2], abs=1e-12)


# classification -------------------------------------------------------------


def test_classify_flat_example():
    out = classify(load_spec(FLAT))
    assert out.is_flat and out.case == "Case1"
    assert (out.C, out.D) == pytest.approx((1.0, 0.0), abs=1e-12)
    assert out.verify_residual <= 1e-8
    assert out.reconstruction_residual <= 1e-8
    assert not out.borderline


def test_classify_witness():
    out = classify(load_spec(WITNESS))
    assert not out.is_flat
    assert out.failed == "r1" and out.where == 0.0


def test_classify_r2_failure():
    out = classify(parametric("v^2/2 + v^3/6", "v + v^2/2"))
    assert out.failed == "r2" and out.where == 0.0
    assert out.C == pytest.approx(1.0)


@pytest.mark.parametrize("case", CASES)
def test_classify_families(case):
    seed = SEEDS[case]
    out = classify(family(*seed))
    assert out.is_flat and out.case == case, out.notes
    assert (out.C1, out.C2, out.C3) == pytest.approx(seed, abs=1e-8)
    assert out.reconstruction_residual <= 1e-8
    assert out.verify_residual <= 1e-8
    assert np.linalg.det(out.affine_map.linear) != 0.0


def test_case3a_delta():
    out = classify(family(0.0, 1.0, 1.0))
    assert out.Delta == pytest.approx(1.0, abs=1e-10)


def test_case3b_delta():
    out = classify(family(1.0, 0.0, 1.0))
    assert out.Delta == pytest.approx(-4.0, abs=1e-10)


def test_classify_general_constants():
    out = classify(family(0.5, -1.0, 2.0, C=1.7, D=-0.4))
    assert out.is_flat and out.case == "Case3_C1nonzero"
    assert (out.C, out.D) == pytest.approx((1.7, -0.4), rel=1e-10)
    assert out.verify_residual <= 1e-8


def test_fitted_constants_closed_forms():
    # Case 1: p'' = 1/(C C3^(3/2)), chi'(0) = -1/(2 p''(0))
    C, C3 = 1.5, 2.0
    out = classify(family(0.0, 0.0, C3, C=C, D=0.3))
    assert out.fitted_constants["C4"] == pytest.approx(0.3)
    assert out.fitted_constants["C5"] == pytest.approx(-C * C3**1.5 / 2, rel=1e-10)
    # Case 3a: chi(tau) = C5/(C6 tau + 1) - C5 with C5 = C3/C2, C6 = C C2 sqrt(C3)/2
    C, C2, C3 = 1.2, 0.8, 1.5
    out = classify(family(0.0, C2, C3, C=C))
    fc = out.fitted_constants
    assert fc["C4"] == pytest.approx(2 * C2 / (C * C2**2 * math.sqrt(C3)), rel=1e-10)
    assert fc["C5"] == pytest.approx(C3 / C2, rel=1e-8)
    assert fc["C6"] == pytest.approx(C * C2 * math.sqrt(C3) / 2, rel=1e-8)
    # Case 2 translation constant
    out = classify(family(1.0, 2.0, 1.0))
    assert out.fitted_constants["C4"] == pytest.approx(0.5, rel=1e-10)


def test_borderline_flag():
    out = classify(family(1e-7, 1.0, 1.0))
    assert out.is_flat and out.borderline
    assert out.case == "Case3_C1nonzero"


def test_classify_explicit_with_shift():
    spec = spec_from_dict({"kind": "explicit", "rho": "1 + 2*t1 - t2 + t1^2/(2*(1-t2))"})
    out = classify(spec)
    assert out.is_flat and out.case == "Case1"
    assert out.verify_residual <= 1e-8


def test_classify_translated_light_cone():
    # x3 = sqrt(t1^2 + (1 + t2)^2) is the light cone itself, shifted
    spec = spec_from_dict({"kind": "explicit", "rho": "sqrt(t1^2 + (1 + t2)^2)"})
    out = classify(spec)
    assert out.is_flat
    assert out.verify_residual <= 1e-8


def test_to_dict_is_json():
    d = classify(load_spec(FLAT)).to_dict()
    json.dumps(d, allow_nan=False)
    assert d["is_flat"] and set(d["affine_map"]) == {"linear", "translation"}
    d = classify(load_spec(WITNESS)).to_dict()
    assert d["failed"] == "r1" and "affine_map" not in d


def test_sample_vs_starts_at_base():
    vs = sample_vs(load_spec(FLAT))
    assert vs[0] == 0.0 and len(vs) == 11
    assert min(vs) == pytest.approx(-0.2 / 1.0) and max(vs) == pytest.approx(0.2)


# soundness of the gates ---------------------------------------------------


@pytest.mark.parametrize("case", ["Case1", "Case3_C1nonzero"])
def test_flat_verdict_implies_vanishing_curvature(case):
    spec = family(*SEEDS[case])
    assert classify(spec).is_flat
    for sp in grid_points(spec, (9, 9)):
        j = rho_jet(spec, sp.point, 5, vw=sp.vw)
        assert abs(theta21_gamma0(j)) <= 1e-8 and abs(theta10_gamma0(j)) <= 1e-8


def test_r1_verdict_implies_curvature_somewhere():
    spec = load_spec(WITNESS)
    out = classify(spec)
    assert out.failed == "r1"
    worst = max(abs(theta21_gamma0(rho_jet(spec, sp.point, 5, vw=sp.vw))) for sp in grid_points(spec, (5, 5)))
    assert worst > 1e-8


# cones ----------------------------------------------------------------------


def flat_points(n=9):
    spec = load_spec(FLAT)
    return spec, [base_point(spec, sp) for sp in grid_points(spec, (n, n))]


def test_fit_cone_flat():
    _, pts = flat_points()
    qd = fit_cone(pts)
    # proportional to -t1^2 - 2 x3 t2 + 2 x3
    ref = Quadric3.normalized(
        np.array([[-1.0, 0, 0], [0, 0, -1.0], [0, -1.0, 0]]), np.array([0.0, 0.0, 2.0]), 0.0
    )
    sign = np.sign(qd.lin[2])
    assert sign * qd.sym == pytest.approx(ref.sym, abs=1e-9)
    assert sign * qd.lin == pytest.approx(ref.lin, abs=1e-9)
    assert abs(qd.const) <= 1e-9
    assert sorted(qd.inertia()) == [1, 2]


def test_fit_cone_light_cone_graph(rng):
    x = rng.uniform(-1, 1, size=(40, 2))
    pts = np.column_stack([x, np.hypot(x[:, 0], x[:, 1])])
    qd = fit_cone(pts)
    ref = np.diag([1.0, 1.0, -1.0]) / math.sqrt(3)
    assert np.sign(qd.sym[0, 0]) * qd.sym == pytest.approx(ref, abs=1e-9)
    assert np.abs(qd.lin).max() <= 1e-9 and abs(qd.const) <= 1e-9


def test_fit_cone_rejects_nonflat():
    spec = load_spec(WITNESS)
    pts = [base_point(spec, sp) for sp in grid_points(spec, (9, 9))]
    with pytest.raises(NotACone):
        fit_cone(pts)


def test_fit_cone_rejects_paraboloid(rng):
    x = rng.uniform(-1, 1, size=(40, 2))
    pts = np.column_stack([x, x[:, 0] ** 2 + x[:, 1] ** 2])
    with pytest.raises((NotACone, NoVertex)):
        fit_cone(pts)


def test_fit_cone_needs_points():
    with pytest.raises(NotACone):
        fit_cone(np.zeros((5, 3)))


def test_no_vertex():
    qd = Quadric3.normalized(np.diag([1.0, 1.0, 0.0]), np.array([0.0, 0.0, -1.0]), 0.0)
    with pytest.raises(NoVertex):
        cone_to_lightcone(qd, (0.0, 0.0, 1.0))


def test_cone_to_lightcone_flat_example():
    spec, pts = flat_points()
    qd = fit_cone(pts)
    amap = cone_to_lightcone(qd, (0.1, 0.0, 0.005))
    held_out = random_points(spec, 50, np.random.default_rng(3))
    for sp in held_out:
        y = amap(base_point(spec, sp))
        assert abs(light_cone(y)) <= 1e-8 and y[2] > 0
    assert verify_affine_equivalence(amap, spec, held_out) <= 1e-8


def test_cone_to_lightcone_identity_quadric(rng):
    qd = Quadric3.normalized(np.diag([1.0, 1.0, -1.0]), np.zeros(3), 0.0)
    amap = cone_to_lightcone(qd, (0.3, 0.4, 0.5))
    # equal to the identity up to scale and the cone's symmetries: M^T E M ∝ E
    E = np.diag([1.0, 1.0, -1.0])
    M = amap.linear
    G = M.T @ E @ M
    assert G == pytest.approx(G[0, 0] * E, abs=1e-12)
    assert np.abs(amap.translation).max() <= 1e-15
    x = rng.uniform(-1, 1, size=(20, 2))
    for p in np.column_stack([x, np.hypot(x[:, 0], x[:, 1])]):
        y = amap(p)
        assert abs(light_cone(y)) <= 1e-12 and y[2] > 0


def test_witness_selects_sheet():
    qd = Quadric3.normalized(np.diag([1.0, 1.0, -1.0]), np.zeros(3), 0.0)
    amap = cone_to_lightcone(qd, (0.0, 0.6, -0.6))
    assert amap((0.0, 0.6, -0.6))[2] > 0


def test_verify_identity_on_light_cone():
    spec = spec_from_dict({"kind": "explicit", "rho": "sqrt((1 + t1)^2 + t2^2)"})
    shift = AffineMap3(np.eye(3), np.array([1.0, 0.0, 0.0]))
    samples = random_points(spec, 50, np.random.default_rng(4))
    assert verify_affine_equivalence(shift, spec, samples) <= 1e-15


def test_verify_negative_control():
    spec = load_spec(FLAT)
    out = classify(spec)
    samples = random_points(spec, 50, np.random.default_rng(5))
    bad = AffineMap3(out.affine_map.linear * np.diag([1.01, 1.0, 1.0]), out.affine_map.translation)
    assert verify_affine_equivalence(bad, spec, samples) > 1e-5
    # the mirror image lands on the past sheet
    flip = AffineMap3(np.diag([1.0, 1.0, -1.0]), np.zeros(3)).compose(out.affine_map)
    with pytest.raises(WrongSheet):
        verify_affine_equivalence(flip, spec, samples)


def test_affine_map_compose_and_singular():
    a = AffineMap3(np.diag([2.0, 1.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    b = AffineMap3(np.eye(3), np.array([0.0, 1.0, 0.0]))
    x = np.array([0.3, -0.2, 0.5])
    assert a.compose(b)(x) == pytest.approx(a(b(x)))
    with pytest.raises(ValueError):
        AffineMap3(np.zeros((3, 3)), np.zeros(3))


def test_normalization_map():
    spec = spec_from_dict({"kind": "explicit", "rho": "1 + 2*t1 - t2 + t1^2"})
    m = normalization_map(spec)
    assert m((0.5, 0.25, 1 + 1 - 0.25 + 0.25)) == pytest.approx([0.5, 0.25, 0.25])
