"""Tube hypersurfaces ``z3 + conj(z3) = rho(z1 + conj(z1), z2 + conj(z2))``.

A :class:`SurfaceSpec` is either *explicit* (``rho`` given as an expression in
``t1``, ``t2``) or *parametric* (``p``, ``q`` given as expressions in ``v``).
Explicit specs are normalised at load time by subtracting the tangent plane
at the origin, so ``rho(0) = rho_1(0) = rho_2(0) = 0``.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CRTubeError, DegreeExhausted, DivisionByZeroJet, SchemaError
from .exprlang import BIVARIATE, UNIVARIATE, eval_jet, eval_point, parse, to_source
from .jets import DEFAULT_DEGREE, Jet2
from .maparam import ExplicitPQ, PQCurve, pq_point, pq_to_rho, solve_v

__all__ = [
    "SurfaceSpec",
    "SamplePoint",
    "AdmissibilityReport",
    "load_spec",
    "spec_from_dict",
    "rho_jet",
    "rho_value",
    "ma_residual",
    "s_invariant",
    "admissibility",
    "grid_points",
    "parallel_map",
]

DEFAULT_BOX = (-0.2, 0.2)
DEFAULT_W = (-0.1, 0.1)


def parallel_map(fn, items):
    """Order-preserving map, threaded when ``CRTUBE_THREADS`` > 1."""
    items = list(items)
    try:
        n = int(os.environ.get("CRTUBE_THREADS", "1"))
    except ValueError:
        n = 1
    if n <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SamplePoint:
    t1: float
    t2: float
    vw: tuple | None = None  # chart coordinates, parametric specs only

    @property
    def point(self):
        return (self.t1, self.t2)


@dataclass(frozen=True)
class SurfaceSpec:
    kind: str
    domain: dict
    rho: object = None
    p: object = None
    q: object = None
    shift: tuple = (0.0, 0.0, 0.0)
    tolerance: float | None = None
    _pq: object = field(default=None, repr=False, compare=False)

    # -- (p, q) sources -------------------------------------------------

    @property
    def pq_source(self):
        """Object with ``at(v) -> PQData`` for this surface."""
        if self._pq is None:
            src = PQCurve(self.p, self.q) if self.kind == "parametric" else ExplicitPQ(self.rho_jet)
            object.__setattr__(self, "_pq", src)
        return self._pq

    def rho_jet(self, point, degree=DEFAULT_DEGREE):
        return rho_jet(self, point, degree)

    def to_dict(self):
        out = {"kind": self.kind, "domain": {k: list(v) for k, v in self.domain.items()}}
        if self.kind == "explicit":
            out["rho"] = to_source(self.rho)
        else:
            out["p"] = to_source(self.p)
            out["q"] = to_source(self.q)
        if self.tolerance is not None:
            out["tolerance"] = self.tolerance
        return out


SPEC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "crtube surface spec",
    "type": "object",
    "properties": {
        "kind": {"enum": ["explicit", "parametric"]},
        "rho": {"type": "string"},
        "p": {"type": "string"},
        "q": {"type": "string"},
        "domain": {
            "type": "object",
            "properties": {
                "t1": {"$ref": "#/$defs/interval"},
                "t2": {"$ref": "#/$defs/interval"},
                "v": {"$ref": "#/$defs/interval"},
                "w": {"$ref": "#/$defs/interval"},
            },
            "additionalProperties": False,
        },
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "explicit"}}},
            "then": {"required": ["rho"], "not": {"anyOf": [{"required": ["p"]}, {"required": ["q"]}]}},
        },
        {
            "if": {"properties": {"kind": {"const": "parametric"}}},
            "then": {"required": ["p", "q"], "not": {"required": ["rho"]}},
        },
    ],
    "$defs": {
        "interval": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        }
    },
}


def _validate(doc):
    import jsonschema

    try:
        jsonschema.validate(doc, SPEC_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {exc.message}") from None
    for name, (lo, hi) in doc.get("domain", {}).items():
        if not lo < hi:
            raise SchemaError(f"domain/{name}: empty interval [{lo}, {hi}]")


def spec_from_dict(doc):
    """Build and normalise a spec from a parsed JSON document."""
    _validate(doc)
    kind = doc["kind"]
    dom = {k: tuple(float(x) for x in v) for k, v in doc.get("domain", {}).items()}
    tol = doc.get("tolerance")
    if kind == "explicit":
        if set(dom) - {"t1", "t2"}:
            raise SchemaError("explicit domain takes only t1 and t2")
        dom.setdefault("t1", DEFAULT_BOX)
        dom.setdefault("t2", DEFAULT_BOX)
        rho = parse(doc["rho"], BIVARIATE)
        j = eval_jet(rho, (0.0, 0.0), 1)
        shift = (j.value, j.derivative(1, 0), j.derivative(0, 1))
        return SurfaceSpec("explicit", dom, rho=rho, shift=shift, tolerance=tol)

    if set(dom) - {"v", "w"}:
        raise SchemaError("parametric domain takes only v and w")
    dom.setdefault("v", DEFAULT_BOX)
    dom.setdefault("w", DEFAULT_W)
    p = parse(doc["p"], UNIVARIATE)
    q = parse(doc["q"], UNIVARIATE)
    pj = eval_jet(p, 0.0, 1)
    qj = eval_jet(q, 0.0, 1)
    if abs(pj.value) > 1e-12 or abs(qj.value) > 1e-12:
        raise SchemaError(f"parametric spec needs p(0) = q(0) = 0, got {pj.value}, {qj.value}")
    if not qj.derivative(1) > 0:
        raise SchemaError(f"parametric spec needs q'(0) > 0, got {qj.derivative(1)}")
    return SurfaceSpec("parametric", dom, p=p, q=q, tolerance=tol)


def load_spec(document):
    """Parse a JSON spec document (text)."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("spec must be a JSON object")
    return spec_from_dict(doc)


def _chart_point(spec, point, vw):
    if vw is None:
        vw = (solve_v(spec.pq_source, point[0], point[1]), point[1])
    return vw


def rho_jet(spec, point, degree=DEFAULT_DEGREE, vw=None):
    """Jet of the normalised ``rho`` at ``point = (t1, t2)``.

    For parametric specs ``vw`` may give the chart coordinates of the point
    to skip the scalar preimage solve.
    """
    if spec.kind == "explicit":
        t1, t2 = float(point[0]), float(point[1])
        j = eval_jet(spec.rho, (t1, t2), degree)
        s0, s1, s2 = spec.shift
        plane = s0 + s1 * t1 + s2 * t2
        return j - plane - s1 * Jet2.variable(1, 0.0, degree) - s2 * Jet2.variable(2, 0.0, degree)
    v, w = _chart_point(spec, point, vw)
    _, _, j = pq_to_rho(spec.pq_source.at(v), (v, w), degree)
    return j


def rho_value(spec, point, vw=None):
    """Pointwise value of the normalised ``rho``."""
    if spec.kind == "explicit":
        t1, t2 = float(point[0]), float(point[1])
        s0, s1, s2 = spec.shift
        return eval_point(spec.rho, (t1, t2)) - s0 - s1 * t1 - s2 * t2
    v, w = _chart_point(spec, point, vw)
    return pq_point(spec.pq_source.at(v, degree=1), w)[2]


def base_point(spec, sample):
    """Point ``(t1, t2, rho)`` of the (normalised) tube base."""
    if spec.kind == "parametric" and sample.vw is not None:
        v, w = sample.vw
        return pq_point(spec.pq_source.at(v, degree=1), w)
    return (sample.t1, sample.t2, rho_value(spec, sample.point))


def grid_points(spec, shape=(21, 21)):
    """Regular grid over the declared domain, in row-major order.

    Parametric specs are gridded in chart coordinates (v, w) and mapped to
    (t1, t2).
    """
    n1, n2 = shape
    if spec.kind == "explicit":
        a = np.linspace(*spec.domain["t1"], n1)
        b = np.linspace(*spec.domain["t2"], n2)
        return [SamplePoint(float(x), float(y)) for x in a for y in b]
    a = np.linspace(*spec.domain["v"], n1)
    b = np.linspace(*spec.domain["w"], n2)
    out = []
    src = spec.pq_source
    for v in a:
        pq = src.at(float(v), degree=1, integral=False)
        for w in b:
            t1, t2, _ = pq_point(pq, float(w))
            out.append(SamplePoint(t1, t2, (float(v), float(w))))
    return out


def random_points(spec, n, rng):
    """``n`` uniformly random sample points in the declared domain."""
    if spec.kind == "explicit":
        a = rng.uniform(*spec.domain["t1"], n)
        b = rng.uniform(*spec.domain["t2"], n)
        return [SamplePoint(float(x), float(y)) for x, y in zip(a, b)]
    a = rng.uniform(*spec.domain["v"], n)
    b = rng.uniform(*spec.domain["w"], n)
    out = []
    for v, w in zip(a, b):
        t1, t2, _ = pq_point(spec.pq_source.at(float(v), degree=1, integral=False), float(w))
        out.append(SamplePoint(t1, t2, (float(v), float(w))))
    return out


def ma_residual(j):
    """Monge-Ampere residual ``rho_11 rho_22 - rho_12^2`` at the jet's base."""
    if j.degree < 2:
        raise DegreeExhausted("Monge-Ampere residual needs a degree >= 2 jet")
    r11 = j.derivative(2, 0)
    r12 = j.derivative(1, 1)
    r22 = j.derivative(0, 2)
    return r11 * r22 - r12 * r12


def s_invariant(j):
    """``S = (rho_12 / rho_11)_1`` and its t1-derivative ``S_1`` at the base."""
    if j.degree < 4:
        raise DegreeExhausted("S and S_1 need a degree >= 4 jet")
    r1 = j.partial(1)
    r11 = r1.partial(1)
    if r11.value == 0.0:
        raise DivisionByZeroJet("rho_11 vanishes")
    S = (r1.partial(2) / r11).partial(1)
    return S.value, S.partial(1).value


@dataclass
class AdmissibilityReport:
    levi_rank1: bool
    two_nondegenerate: bool
    max_ma_residual: float
    min_rho11: float
    min_abs_S: float
    tol: float
    region: dict
    samples: list

    def to_dict(self):
        return {
            "levi_rank1": self.levi_rank1,
            "two_nondegenerate": self.two_nondegenerate,
            "max_ma_residual": self.max_ma_residual,
            "min_rho11": self.min_rho11,
            "min_abs_S": self.min_abs_S,
            "tol": self.tol,
            "region": self.region,
            "samples": self.samples,
        }


def _admissibility_sample(spec, sp):
    entry = {"t1": sp.t1, "t2": sp.t2}
    try:
        j = rho_jet(spec, sp.point, 4, vw=sp.vw)
        entry["ma_residual"] = ma_residual(j)
        entry["rho11"] = j.derivative(2, 0)
        entry["S"] = s_invariant(j)[0] if entry["rho11"] != 0.0 else 0.0
    except CRTubeError as exc:
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry


def admissibility(spec, grid=None, tol=1e-9):
    """Sample the Levi rank-1 and 2-nondegeneracy conditions on a grid.

    This certifies only the sampled points; ``region`` records which.
    """
    if grid is None:
        grid = grid_points(spec)
    samples = parallel_map(lambda sp: _admissibility_sample(spec, sp), grid)
    good = [s for s in samples if "error" not in s]
    if good:
        max_ma = max(abs(s["ma_residual"]) for s in good)
        min_r11 = min(s["rho11"] for s in good)
        min_s = min(abs(s["S"]) for s in good)
    else:
        max_ma, min_r11, min_s = math.inf, -math.inf, 0.0
    complete = len(good) == len(samples)
    region = {k: list(v) for k, v in spec.domain.items()}
    region["points"] = len(samples)
    levi = complete and max_ma <= tol and min_r11 > 0.0
    return AdmissibilityReport(
        levi_rank1=levi,
        two_nondegenerate=complete and min_s > tol,
        max_ma_residual=_finite(max_ma),
        min_rho11=_finite(min_r11),
        min_abs_S=_finite(min_s),
        tol=tol,
        region=region,
        samples=samples,
    )


def _finite(x):
    return x if math.isfinite(x) else None
