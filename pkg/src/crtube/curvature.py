"""CR-curvature coefficients of a Levi-degenerate tube hypersurface.

All quantities are computed from a :class:`~crtube.jets.Jet2` of the
normalised defining function ``rho`` at a point.  Derivatives are exact jet
derivatives; no finite differences are used.

Notation: ``rho11 = d^2 rho / dt1^2``, ``rho111`` the third t1-derivative,
``rho4``/``rho5`` the fourth/fifth t1-derivatives, ``S = (rho12/rho11)_1``
and ``S1 = dS/dt1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import CRTubeError, DegreeExhausted, PreconditionFailed
from .surface import SamplePoint, ma_residual, parallel_map, rho_jet

__all__ = [
    "FiberPoint",
    "GAMMA0",
    "FiberCoefficients",
    "CurvatureSample",
    "fiber_coefficients",
    "theta21_gamma0",
    "theta10_gamma0",
    "pde_residual_theta21",
    "ode_residual_theta10",
    "curvature_sample",
    "curvature_grid",
]

S_FLOOR = 1e-12


@dataclass(frozen=True)
class FiberPoint:
    """Fibre coordinates ``(u, a, b, lambda)``: u > 0, |a| = 1, lambda imaginary."""

    u: float = 1.0
    a: complex = 1.0
    b: complex = 0.0
    lam: complex = 0.0

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError(f"u must be positive, got {self.u}")
        if abs(abs(self.a) - 1.0) > 1e-12:
            raise ValueError(f"|a| must be 1, got {abs(self.a)}")
        if abs(complex(self.lam).real) > 1e-12:
            raise ValueError(f"lambda must be purely imaginary, got {self.lam}")


GAMMA0 = FiberPoint()


@dataclass(frozen=True)
class FiberCoefficients:
    theta21_2_1bar: complex
    theta22_1_1bar: complex
    phi23_1_1bar: complex
    phi14_1_1bar: complex
    c: complex
    f: complex
    g: complex
    r: complex


@dataclass(frozen=True)
class CurvatureSample:
    point: tuple
    ma_residual: float
    rho11: float
    S: float
    S1: float
    theta2_21: float
    theta2_10: float
    flat_here: bool

    CSV_COLUMNS = ("t1", "t2", "ma_residual", "rho11", "S", "S1", "theta2_21", "theta2_10", "flat_here")

    def to_dict(self):
        return {
            "t1": self.point[0],
            "t2": self.point[1],
            "ma_residual": self.ma_residual,
            "rho11": self.rho11,
            "S": self.S,
            "S1": self.S1,
            "theta2_21": self.theta2_21,
            "theta2_10": self.theta2_10,
            "flat_here": self.flat_here,
        }


@dataclass(frozen=True)
class _Local:
    rho11: float
    rho12: float
    rho111: float
    rho4: float
    rho5: float | None
    S: float | None
    S1: float | None
    # first partials of A = S1/(sqrt(rho11) S) and B = rho111/rho11^(3/2)
    A1: float | None = None
    A2: float | None = None
    B1: float | None = None
    B2: float | None = None


def _need(j, degree, what):
    if j.degree < degree:
        raise DegreeExhausted(f"{what} needs a degree >= {degree} jet, got {j.degree}")


def _local(j, need_s=True, need_ab=False):
    r1 = j.partial(1)
    r11 = r1.partial(1)
    rho11 = r11.value
    if not rho11 > 0.0:
        raise PreconditionFailed("rho11", rho11)
    r111 = r11.partial(1)
    rho4 = r111.partial(1).value if j.degree >= 4 else None
    rho5 = j.derivative(5, 0) if j.degree >= 5 else None
    ratio = r1.partial(2) / r11
    S = S1 = A1 = A2 = B1 = B2 = None
    if need_s:
        Sj = ratio.partial(1)
        S = Sj.value
        if abs(S) <= S_FLOOR:
            raise PreconditionFailed("S", S)
        S1j = Sj.partial(1)
        S1 = S1j.value
        if need_ab:
            sq = r11.sqrt()
            A = S1j / (sq * Sj)
            B = r111 / (r11 * sq)
            A1, A2 = A.partial(1).value, A.partial(2).value
            B1, B2 = B.partial(1).value, B.partial(2).value
    return _Local(rho11, ratio.value * rho11, r111.value, rho4, rho5, S, S1, A1, A2, B1, B2)


def fiber_coefficients(j, fiber=GAMMA0):
    """The four normalising curvature coefficients at a fibre point.

    Returns the coefficients together with the parameters ``c, f, g, r``
    they determine.
    """
    _need(j, 4, "fiber_coefficients")
    L = _local(j)
    u, a, b, lam = fiber.u, complex(fiber.a), complex(fiber.b), complex(fiber.lam)
    ab, bb = a.conjugate(), b.conjugate()
    r11, r111, r4 = L.rho11, L.rho111, L.rho4
    root = math.sqrt(u * r11)
    root3 = math.sqrt(u * r11**3)

    theta21 = -a * L.S1 / (root * L.S) + a * r111 / root3 + 3 * bb
    theta22 = (
        a * a * r4 / (3 * u * r11**2)
        + 2 * a * bb * r111 / (3 * root3)
        - 4 * a * a * r111**2 / (9 * u * r11**3)
        + bb * bb
    )
    phi23 = (
        r4 / (3 * u * r11**2)
        + a * b * r111 / (3 * root3)
        + ab * bb * r111 / (3 * root3)
        - 4 * r111**2 / (9 * u * r11**3)
        + abs(b) ** 2
    )
    phi14 = (
        (4 * a * a * b - a * b - ab * bb - 2 * bb) * r4 / (6 * u * r11**2)
        - (11 * a * a * b - 3 * a * b - 3 * ab * bb - 5 * bb) * r111**2 / (12 * u * r11**3)
        + (a * abs(b) ** 2 - ab * bb * bb) * r111 / (4 * root3)
        - 3 * lam * bb / 2
    )
    return FiberCoefficients(
        theta21_2_1bar=theta21,
        theta22_1_1bar=theta22,
        phi23_1_1bar=phi23,
        phi14_1_1bar=phi14,
        c=theta21 / 3,
        f=-theta22 / 2,
        g=-phi23 / 2,
        r=-2 * phi14 / 3,
    )


def theta21_gamma0(j):
    """Coefficient Theta^2_21 on the section u=1, a=1, b=0, lambda=0."""
    _need(j, 5, "theta21_gamma0")
    L = _local(j, need_ab=True)
    ratio = L.rho12 / L.rho11
    sq = math.sqrt(L.rho11)
    return (
        (ratio * L.A1 - L.A2) / (3 * L.S)
        - (ratio * L.B1 - L.B2) / (3 * L.S)
        - 11 * L.S1 / (6 * sq * L.S)
        - L.rho111 / (6 * sq**3)
    )


def pde_residual_theta21(j):
    """Reduced form of ``theta21_gamma0`` (multiplied by ``6 S rho11^(3/2)``)."""
    _need(j, 5, "pde_residual_theta21")
    L = _local(j, need_ab=True)
    sq = math.sqrt(L.rho11)
    return (
        2 * sq * (L.rho12 * L.A1 - L.rho11 * L.A2)
        - 2 * sq * (L.rho12 * L.B1 - L.rho11 * L.B2)
        - 11 * L.S1 * L.rho11
        - L.S * L.rho111
    )


def theta10_gamma0(j):
    """Coefficient Theta^2_10 on the section u=1, a=1, b=0, lambda=0."""
    _need(j, 5, "theta10_gamma0")
    L = _local(j, need_s=False)
    r11, r111 = L.rho11, L.rho111
    return (
        L.rho5 / (6 * r11**2.5)
        - 5 * L.rho4 * r111 / (6 * r11**3.5)
        + 20 * r111**3 / (27 * r11**4.5)
    )


def ode_residual_theta10(j):
    """``9 rho5 rho11^2 - 45 rho4 rho111 rho11 + 40 rho111^3``."""
    _need(j, 5, "ode_residual_theta10")
    r11 = j.derivative(2, 0)
    r111 = j.derivative(3, 0)
    r4 = j.derivative(4, 0)
    r5 = j.derivative(5, 0)
    return 9 * r5 * r11**2 - 45 * r4 * r111 * r11 + 40 * r111**3


def assert_real(z, tol=1e-10):
    """Real part of ``z``; raises when the imaginary part exceeds ``tol``."""
    z = complex(z)
    if abs(z.imag) > tol * max(1.0, abs(z.real)):
        raise ValueError(f"expected a real value, got {z}")
    return z.real


def curvature_sample(spec, sample, tol=1e-9):
    """Evaluate all per-point quantities; raises on failed preconditions."""
    if not isinstance(sample, SamplePoint):
        sample = SamplePoint(float(sample[0]), float(sample[1]))
    j = rho_jet(spec, sample.point, 5, vw=sample.vw)
    L = _local(j)
    t21 = theta21_gamma0(j)
    t10 = theta10_gamma0(j)
    return CurvatureSample(
        point=sample.point,
        ma_residual=ma_residual(j),
        rho11=L.rho11,
        S=L.S,
        S1=L.S1,
        theta2_21=t21,
        theta2_10=t10,
        flat_here=abs(t21) <= tol and abs(t10) <= tol,
    )


def curvature_grid(spec, points, tol=1e-9):
    """Curvature samples over ``points``, in order.

    Points where evaluation fails yield ``{"t1", "t2", "error"}`` dicts
    instead of samples.
    """

    def one(sp):
        try:
            return curvature_sample(spec, sp, tol)
        except CRTubeError as exc:
            t1, t2 = (sp.t1, sp.t2) if isinstance(sp, SamplePoint) else sp
            return {"t1": t1, "t2": t2, "error": f"{type(exc).__name__}: {exc}"}

    return parallel_map(one, points)

