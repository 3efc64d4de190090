"""Parametric solutions of the homogeneous Monge-Ampere equation.

A rank-one solution ``rho`` normalised at the origin corresponds to a pair of
functions ``p(v)``, ``q(v)`` through the chart ``v = rho_1(t1, t2)``,
``w = t2``, whose inverse is ``t1 = q(v) - w p'(v)``.  This module converts
in both directions and evaluates the closed-form (v, w) expressions for the
derivatives of ``rho`` used by the curvature formulas.

Sources of (p, q) data share one duck-typed method, ``at(v) -> PQData``:

* :class:`PQData` itself (polynomial re-expansion),
* :class:`PQCurve` (p and q given as expressions in ``v``),
* :class:`ExplicitPQ` (p and q extracted from an explicit ``rho``).
"""

from __future__ import annotations

from dataclasses import dataclass

from scipy import integrate

from .errors import DegreeExhausted, DomainError, SingularParametrization
from .exprlang import eval_jet, eval_point
from .jets import DEFAULT_DEGREE, Jet1, Jet2, jet_solve_implicit

__all__ = [
    "PQData",
    "PQCurve",
    "ExplicitPQ",
    "DerivativeBridge",
    "pq_to_rho",
    "rho_to_pq",
    "vw_derivatives",
    "solve_v",
    "pq_point",
]

# Jets of p need two more orders than the rho jet they feed (p' enters the chart).
PQ_DEGREE = DEFAULT_DEGREE + 2


@dataclass(frozen=True)
class PQData:
    """Jets of ``p`` and ``q`` at ``base_v``.

    ``int_q`` is the integral of ``q`` from 0 to ``base_v``, which a local
    jet cannot know on its own.
    """

    p: Jet1
    q: Jet1
    base_v: float = 0.0
    int_q: float = 0.0

    def at(self, v, degree=None, integral=True):
        """Re-expand around ``v`` (exact for polynomial p, q).

        ``degree`` and ``integral`` are accepted for interface parity and ignored.
        """
        dv = float(v) - self.base_v
        if dv == 0.0:
            return self
        return PQData(
            self.p.recenter(dv),
            self.q.recenter(dv),
            float(v),
            self.int_q + self.q.integrate()(dv),
        )

    def p_derivs(self):
        return self.p.derivatives()

    def q_derivs(self):
        return self.q.derivatives()


class PQCurve:
    """(p, q) given by univariate expressions; jets are exact at every ``v``."""

    def __init__(self, p_expr, q_expr, degree=PQ_DEGREE):
        self.p_expr = p_expr
        self.q_expr = q_expr
        self.degree = degree

    def q_integral(self, v):
        if v == 0.0:
            return 0.0
        val, _ = integrate.quad(
            lambda s: eval_point(self.q_expr, s), 0.0, v, epsabs=1e-15, epsrel=1e-13, limit=200
        )
        return float(val)

    def at(self, v, degree=None, integral=True):
        """Jets at ``v``; ``integral=False`` skips the quadrature for ``int_q``."""
        d = self.degree if degree is None else degree
        v = float(v)
        return PQData(
            eval_jet(self.p_expr, v, d),
            eval_jet(self.q_expr, v, d),
            v,
            self.q_integral(v) if integral else float("nan"),
        )


class ExplicitPQ:
    """(p, q) read off an explicit normalised ``rho`` along the line ``t2 = 0``.

    ``q(v) = t1(v, 0)`` inverts ``v = rho_1(t1, 0)`` and ``p(v) = rho_2(t1(v, 0), 0)``.
    ``rho_jet`` is a callable ``(point, degree) -> Jet2`` of the normalised function.
    """

    def __init__(self, rho_jet, degree=PQ_DEGREE):
        self.rho_jet = rho_jet
        self.degree = degree

    def t1_for(self, v, t1_start=0.0, tol=1e-15, max_iter=60):
        """Scalar Newton solve of ``rho_1(t1, 0) = v``."""
        t1 = float(t1_start)
        for _ in range(max_iter):
            j = self.rho_jet((t1, 0.0), 2)
            r1 = j.derivative(1, 0) - v
            r11 = j.derivative(2, 0)
            if r11 == 0.0:
                raise SingularParametrization(f"rho_11 vanishes at t1={t1}")
            step = r1 / r11
            t1 -= step
            if abs(step) <= tol * max(1.0, abs(t1)):
                return t1
        raise SingularParametrization(f"no t1 with rho_1(t1, 0) = {v} (Newton did not converge)")

    def at(self, v, degree=None, integral=True):
        d = self.degree if degree is None else degree
        v = float(v)
        t1 = 0.0 if v == 0.0 else self.t1_for(v)
        j = self.rho_jet((t1, 0.0), d + 1)
        g = j.partial(1).restrict(1)  # s -> rho_1(t1 + s, 0)
        h = j.partial(2).restrict(1)  # s -> rho_2(t1 + s, 0)
        dv = Jet1.variable(0.0, d)
        gd = g.diff()
        s = jet_solve_implicit(
            lambda s: g.compose(s) - v - dv,
            lambda s: gd.compose(s),
            dv,
        )
        q = s + t1
        p = h.compose(s)
        # Chart identity at w = 0: rho(q(v), 0) = v q(v) - int_0^v q.
        int_q = v * t1 - j.value
        return PQData(p, q, v, int_q)


def rho_to_pq(rho_jet, v=0.0, degree=PQ_DEGREE):
    """(p, q) jets at ``v`` for an explicit normalised surface.

    ``rho_jet`` is either a ``SurfaceSpec`` of explicit kind or a callable
    ``(point, degree) -> Jet2``.
    """
    if hasattr(rho_jet, "rho_jet"):
        spec = rho_jet
        if spec.kind != "explicit":
            raise ValueError("rho_to_pq needs an explicit spec")
        rho_jet = spec.rho_jet
    return ExplicitPQ(rho_jet, degree).at(v)


def _chart_denominator(pq, w):
    q1 = pq.q.derivative(1)
    p2 = pq.p.derivative(2)
    den = q1 - w * p2
    if abs(den) <= 1e-14 * max(1.0, abs(q1), abs(w * p2)):
        raise SingularParametrization(f"q' - w p'' = {den} at v={pq.base_v}, w={w}")
    return den


def pq_point(pq, w):
    """Base point ``(t1, t2, rho)`` for chart coordinates ``(pq.base_v, w)``."""
    v = pq.base_v
    q0, p0 = pq.q.value, pq.p.value
    p1 = pq.p.derivative(1)
    t1 = q0 - w * p1
    rho = v * q0 - pq.int_q + w * (p0 - v * p1)
    return t1, float(w), rho


def pq_to_rho(pq, vw, degree=DEFAULT_DEGREE):
    """Point, value and jet of ``rho`` at the image of chart point ``vw``.

    Returns ``((t1, t2), rho_value, rho_jet)``.
    """
    v, w = float(vw[0]), float(vw[1])
    if v != pq.base_v:
        pq = pq.at(v)
    if pq.q.degree < degree or pq.p.degree < degree + 1:
        raise DegreeExhausted(
            f"need deg q >= {degree} and deg p >= {degree + 1}, got {pq.q.degree}, {pq.p.degree}"
        )
    _chart_denominator(pq, w)
    t1, t2, rho0 = pq_point(pq, w)

    p, q = pq.p, pq.q
    p1 = p.diff()
    p2 = p1.diff()
    q1 = q.diff()
    T1 = Jet2.variable(1, 0.0, degree)
    W = Jet2.variable(2, w, degree)

    # dv(dt1, dt2) solves q(v + dv) - (w + dt2) p'(v + dv) = t1 + dt1.
    dv = jet_solve_implicit(
        lambda x: q.compose(x) - W * p1.compose(x) - t1 - T1,
        lambda x: q1.compose(x) - W * p2.compose(x),
        T1,
    )
    V = dv + v
    rho = (
        V * q.compose(dv)
        - (q.integrate().compose(dv) + pq.int_q)
        + W * (p.compose(dv) - V * p1.compose(dv))
    )
    return (t1, t2), rho0, rho


def solve_v(source, t1, t2, v_start=0.0, tol=1e-15, max_iter=60):
    """Chart coordinate ``v`` with ``q(v) - t2 p'(v) = t1`` (scalar Newton)."""
    v = float(v_start)
    for _ in range(max_iter):
        pq = source.at(v, degree=2, integral=False)
        q0, q1 = pq.q.value, pq.q.derivative(1)
        p1, p2 = pq.p.derivative(1), pq.p.derivative(2)
        den = q1 - t2 * p2
        if den == 0.0:
            raise SingularParametrization(f"q' - w p'' vanishes at v={v}, w={t2}")
        step = (q0 - t2 * p1 - t1) / den
        v -= step
        if abs(step) <= tol * max(1.0, abs(v)):
            return v
    raise DomainError(f"no chart preimage for (t1, t2) = ({t1}, {t2})")


@dataclass(frozen=True)
class DerivativeBridge:
    S: float
    S1: float
    rho11: float
    rho12: float
    rho111: float
    rho4: float
    rho5: float

    FIELDS = ("S", "S1", "rho11", "rho12", "rho111", "rho4", "rho5")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.FIELDS}


def vw_derivatives(pq, vw):
    """Derivatives of ``rho`` at chart point ``vw`` from the closed (p, q) formulas."""
    v, w = float(vw[0]), float(vw[1])
    if v != pq.base_v:
        pq = pq.at(v)
    if pq.p.degree < 5 or pq.q.degree < 4:
        raise DegreeExhausted("vw_derivatives needs deg p >= 5 and deg q >= 4")
    _, p1, p2, p3, p4, p5 = pq.p.derivatives()[:6]
    _, q1, q2, q3, q4 = pq.q.derivatives()[:5]
    den = _chart_denominator(pq, w)
    # Derivatives of den = q' - w p'' along v.
    d1 = q2 - w * p3
    d2 = q3 - w * p4
    d3 = q4 - w * p5
    rho4 = -(d2 * den - 3.0 * d1**2) / den**5
    rho5 = -((d3 * den + d2 * d1 - 6.0 * d1 * d2) * den - 5.0 * (d2 * den - 3.0 * d1**2) * d1) / den**7
    return DerivativeBridge(
        S=p2 / den,
        S1=(p3 * q1 - p2 * q2) / den**3,
        rho11=1.0 / den,
        rho12=p1 / den,
        rho111=-d1 / den**3,
        rho4=rho4,
        rho5=rho5,
    )
