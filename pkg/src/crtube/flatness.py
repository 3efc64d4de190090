"""Deciding CR-flatness of a tube and normalising flat ones to the light cone.

The decision works with the (p, q) description of the base.  Flatness is
equivalent to two ODE conditions:

* ``r1 = p''' q' - p'' q''`` vanishes, so ``q = C (p' - D)``;
* ``r2 = 9 p^(5) p''^2 - 45 p^(4) p''' p'' + 40 p'''^3`` vanishes, so
  ``(C p'')^(-2/3)`` is a quadratic ``C1 v^2 + C2 v + C3``.

A flat base is then reconstructed in closed form through the function chi
(:func:`chi_reconstruct`).  It lies on a quadratic cone, and an affine map
onto ``x1^2 + x2^2 - x3^2 = 0, x3 > 0`` is fitted and verified numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CRTubeError,
    DegreeExhausted,
    NoVertex,
    NotACone,
    NotLinearlyRelated,
    NotQuadratic,
    ReversionFailed,
    SingularImplicit,
    WrongSheet,
)
from .jets import Jet1, jet_solve_implicit
from .surface import SamplePoint, base_point, grid_points, random_points, rho_jet

__all__ = [
    "AffineMap3",
    "Quadric3",
    "Reconstruction",
    "FlatClassification",
    "flat_residuals_pq",
    "recover_relation",
    "recover_quadratic",
    "chi_reconstruct",
    "fit_cone",
    "cone_to_lightcone",
    "verify_affine_equivalence",
    "sample_vs",
    "flat_family",
    "classify",
    "CASES",
]

CASES = ("Case1", "Case2", "Case3_C1zero", "Case3_C1nonzero")
DEFAULT_TOL = 1e-8


# residual gates ---------------------------------------------------------


def _derivs(pq, need_p, need_q):
    if pq.p.degree < need_p or pq.q.degree < need_q:
        raise DegreeExhausted(f"need deg p >= {need_p} and deg q >= {need_q}")
    return pq.p.derivatives(), pq.q.derivatives()


def _r1(pq):
    p, q = _derivs(pq, 3, 2)
    a, b = p[3] * q[1], p[2] * q[2]
    return a - b, max(abs(a), abs(b), abs(p[2] * q[1]))


def _r2(pq):
    p, _ = _derivs(pq, 5, 0)
    terms = (9 * p[5] * p[2] ** 2, 45 * p[4] * p[3] * p[2], 40 * p[3] ** 3)
    return terms[0] - terms[1] + terms[2], max(max(abs(t) for t in terms), abs(p[2]) ** 3)


def flat_residuals_pq(pq, samples):
    """Residuals ``r1`` and ``r2`` at each sample ``v`` (arrays)."""
    r1, r2 = [], []
    for v in samples:
        local = pq.at(float(v), integral=False)
        r1.append(_r1(local)[0])
        r2.append(_r2(local)[0])
    return np.array(r1), np.array(r2)


def _gate(pq, samples, which, tol):
    """First sample where the scaled residual exceeds ``tol``, and the max scaled residual."""
    fn = _r1 if which == "r1" else _r2
    worst, where = 0.0, None
    for v in samples:
        r, scale = fn(pq.at(float(v), integral=False))
        rel = abs(r) / scale if scale > 0 else 0.0
        if rel > tol and where is None:
            where = float(v)
        worst = max(worst, rel)
    return worst, where


def recover_relation(pq, samples, tol=DEFAULT_TOL):
    """Constants ``C, D`` with ``q = C (p' - D)``, checked at ``samples``."""
    base = pq.at(0.0, integral=False)
    p2 = base.p.derivative(2)
    if p2 == 0.0:
        raise NotLinearlyRelated(math.inf, 0.0)
    D = base.p.derivative(1)
    C = base.q.derivative(1) / p2
    span = max([abs(float(v)) for v in samples] + [1.0])
    worst, where = 0.0, None
    for v in samples:
        local = pq.at(float(v), integral=False)
        qv = local.q.value
        rel = C * (local.p.derivative(1) - D)
        scale = max(abs(qv), abs(rel), abs(base.q.derivative(1)) * span)
        dev = abs(qv - rel) / scale
        if dev > worst:
            worst, where = dev, float(v)
        if not C * local.p.derivative(2) > 0:
            raise NotLinearlyRelated(math.inf, float(v))
    if worst > tol:
        raise NotLinearlyRelated(worst, where)
    return C, D


def recover_quadratic(pq, C, samples, tol=DEFAULT_TOL):
    """``(C1, C2, C3, Delta)`` with ``(C p'')^(-2/3) = C1 v^2 + C2 v + C3``."""
    base = pq.at(0.0, integral=False)
    if base.p.degree < 5:
        raise DegreeExhausted("recover_quadratic needs deg p >= 5")
    h = (C * base.p.diff().diff()).pow_real(-2.0 / 3.0)
    C3, C2, C1 = h.value, h.derivative(1), h.derivative(2) / 2.0
    size = max(abs(C1), abs(C2), abs(C3))
    h3 = abs(h.derivative(3)) / 6.0
    if h3 > tol * size:
        raise NotQuadratic(h3 / size, 0.0)
    worst, where = 0.0, None
    for v in samples:
        v = float(v)
        p2 = pq.at(v, integral=False).p.derivative(2)
        quad = C1 * v * v + C2 * v + C3
        if not quad > 0:
            raise NotQuadratic(math.inf, v)
        model = 1.0 / (C * quad**1.5)
        dev = abs(p2 - model) / abs(model)
        if dev > worst:
            worst, where = dev, v
    if worst > tol:
        raise NotQuadratic(worst, where)
    return C1, C2, C3, C2 * C2 - 4.0 * C1 * C3


# reconstruction ---------------------------------------------------------


@dataclass(frozen=True)
class Reconstruction:
    """The closed form ``rho~ = (t1 + D t2) chi((t1 + D t2) / (t2 - C))``.

    ``zeta`` and ``chi`` are jets at 0.  Pointwise values use the identity
    ``int_0^tau zeta = p(V) - V p'(V)`` with ``D - p'(V) = tau``, so they stay
    accurate away from the jet's base.
    """

    C: float
    D: float
    zeta: Jet1
    chi: Jet1
    source: object = field(repr=False, compare=False)

    def tau(self, t1, t2):
        return (t1 + self.D * t2) / (t2 - self.C)

    def solve_V(self, tau, tol=1e-15, max_iter=60):
        """``V`` with ``D - p'(V) = tau`` (Newton, started from the jet of zeta)."""
        V = float(self.zeta(tau))
        for _ in range(max_iter):
            pq = self.source.at(V, degree=2, integral=False)
            f = self.D - pq.p.derivative(1) - tau
            step = -f / pq.p.derivative(2)
            V -= step
            if abs(step) <= tol * max(1.0, abs(V)):
                return V
        raise ReversionFailed(f"no V with D - p'(V) = {tau}")

    def __call__(self, t1, t2):
        tau = self.tau(t1, t2)
        V = self.solve_V(tau)
        pq = self.source.at(V, degree=1, integral=False)
        p0 = self.source.at(0.0, degree=1, integral=False).p.value
        return (t2 - self.C) * (pq.p.value - p0 - V * pq.p.derivative(1))


def chi_reconstruct(pq, C, D):
    """Build ``zeta`` (inverse of ``D - p'``) and ``chi`` as jets at 0.

    ``pq`` is any (p, q) source.  Checks ``chi(0) = 0`` and
    ``chi'(0) = -1/(2 p''(0))``.
    """
    base = pq.at(0.0, integral=False)
    g = D - base.p.diff()
    if g.derivative(1) == 0.0:
        raise ReversionFailed("(D - p')'(0) = 0, the inverse does not exist")
    sigma = Jet1.variable(0.0, g.degree)
    gd = g.diff()
    try:
        zeta = jet_solve_implicit(lambda z: g.compose(z) - sigma, lambda z: gd.compose(z), sigma)
    except SingularImplicit as exc:
        raise ReversionFailed(str(exc)) from exc
    chi = zeta.integrate().divide_by_variable()
    p2 = base.p.derivative(2)
    slope = -1.0 / (2.0 * p2)
    if abs(chi.value) > 1e-12 or abs(chi.derivative(1) - slope) > 1e-10 * abs(slope):
        raise ReversionFailed(f"chi(0) = {chi.value}, chi'(0) = {chi.derivative(1)}, expected 0, {slope}")
    return Reconstruction(C, D, zeta, chi, pq)


# cones ------------------------------------------------------------------


@dataclass(frozen=True)
class AffineMap3:
    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=float)
        tr = np.asarray(self.translation, dtype=float)
        if lin.shape != (3, 3) or tr.shape != (3,):
            raise ValueError("AffineMap3 needs a 3x3 linear part and a 3-vector")
        if abs(np.linalg.det(lin)) <= 1e-14 * max(1.0, np.abs(lin).max()) ** 3:
            raise ValueError("linear part is singular")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "translation", tr)

    def __call__(self, x):
        return self.linear @ np.asarray(x, dtype=float) + self.translation

    def compose(self, inner):
        """``self o inner``."""
        return AffineMap3(self.linear @ inner.linear, self.linear @ inner.translation + self.translation)

    def to_dict(self):
        return {"linear": self.linear.tolist(), "translation": self.translation.tolist()}


@dataclass(frozen=True)
class Quadric3:
    """``x^T sym x + lin . x + const``, with ``|sym|_F = 1``."""

    sym: np.ndarray
    lin: np.ndarray
    const: float
    residual: float = 0.0

    @classmethod
    def normalized(cls, sym, lin, const, residual=0.0):
        sym = np.asarray(sym, dtype=float)
        sym = (sym + sym.T) / 2.0
        n = np.linalg.norm(sym)
        if n == 0.0:
            raise NotACone("quadratic part vanishes")
        return cls(sym / n, np.asarray(lin, dtype=float) / n, float(const) / n, residual / n)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.sym @ x + self.lin @ x + self.const)

    def values(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.einsum("ni,ij,nj->n", pts, self.sym, pts) + pts @ self.lin + self.const

    def inertia(self, rel=1e-8):
        lam = np.linalg.eigvalsh(self.sym)
        cut = rel * np.abs(lam).max()
        return int((lam > cut).sum()), int((lam < -cut).sum())

    def vertex(self):
        """Centre ``x0`` with ``2 sym x0 + lin = 0``; raises NoVertex if there is none."""
        if np.linalg.cond(self.sym) > 1e10:
            raise NoVertex("quadratic part is degenerate; the quadric has no unique centre")
        return np.linalg.solve(2.0 * self.sym, -self.lin)

    def to_dict(self):
        return {"sym": self.sym.tolist(), "lin": self.lin.tolist(), "const": self.const}


def _monomials(u):
    x, y, z = u[:, 0], u[:, 1], u[:, 2]
    one = np.ones_like(x)
    return np.column_stack([x * x, y * y, z * z, x * y, x * z, y * z, x, y, z, one])


def fit_cone(samples, tol=DEFAULT_TOL):
    """Fit a quadratic cone through base points ``(t1, t2, rho)``.

    The fit is the smallest right singular vector of the monomial matrix in
    centred, scaled coordinates, mapped back to the original ones.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 10:
        raise NotACone("need at least 10 points in R^3")
    m = pts.mean(axis=0)
    s = pts.std(axis=0)
    s[s == 0.0] = 1.0
    u = (pts - m) / s
    _, sv, vt = np.linalg.svd(_monomials(u), full_matrices=False)
    c = vt[-1]
    A = np.array([[c[0], c[3] / 2, c[4] / 2], [c[3] / 2, c[1], c[5] / 2], [c[4] / 2, c[5] / 2, c[2]]])
    b = c[6:9]
    # u = Si (x - m) with Si = diag(1/s)
    Si = np.diag(1.0 / s)
    sym = Si @ A @ Si
    lin = Si @ b - 2.0 * sym @ m
    const = m @ sym @ m - b @ (Si @ m) + c[9]
    resid = float(np.abs(_monomials(u) @ c).max())
    qd = Quadric3.normalized(sym, lin, const)
    if resid > tol:
        raise NotACone(f"quadric fit residual {resid:.3g} exceeds {tol:.3g}")
    if sorted(qd.inertia()) != [1, 2]:
        raise NotACone(f"quadratic part has inertia {qd.inertia()}, expected (2, 1) up to sign")
    x0 = qd.vertex()
    at_vertex = qd(x0)
    if abs(at_vertex) > tol * max(1.0, abs(qd.const)):
        raise NotACone(f"quadric does not vanish at its centre ({at_vertex:.3g}); not a cone")
    return Quadric3(qd.sym, qd.lin, qd.const, resid)


def cone_to_lightcone(qd, witness):
    """Affine map taking the cone ``qd = 0`` to ``x1^2 + x2^2 = x3^2`` with ``witness`` on ``x3 > 0``."""
    x0 = qd.vertex()
    lam, U = np.linalg.eigh(qd.sym)
    if (lam > 0).sum() == 1:
        lam = -lam
    if sorted([int((lam > 0).sum()), int((lam < 0).sum())]) != [1, 2]:
        raise NotACone(f"eigenvalues {lam} do not have cone signature")
    order = np.argsort(lam)[::-1]  # two positive first, the negative one last
    lam, U = lam[order], U[:, order]
    L = np.diag(np.sqrt(np.abs(lam))) @ U.T
    y = L @ (np.asarray(witness, dtype=float) - x0)
    if y[2] < 0:
        L[2] = -L[2]
    return AffineMap3(L, -L @ x0)


def _raw_point(spec, sample):
    """Base point before the tangent-plane normalisation."""
    t1, t2, x3 = base_point(spec, sample)
    s0, s1, s2 = spec.shift
    return np.array([t1, t2, x3 + s0 + s1 * t1 + s2 * t2])


def normalization_map(spec):
    """Affine map from raw base coordinates to the normalised ones."""
    s0, s1, s2 = spec.shift
    return AffineMap3(np.array([[1.0, 0, 0], [0, 1.0, 0], [-s1, -s2, 1.0]]), np.array([0.0, 0.0, -s0]))


def verify_affine_equivalence(amap, spec, samples):
    """Max ``|x1^2 + x2^2 - x3^2|`` over the images of raw base points; WrongSheet if some ``x3 <= 0``."""
    worst = 0.0
    for sp in samples:
        y = amap(_raw_point(spec, sp))
        if not y[2] > 0:
            raise WrongSheet(f"image of {sp.point} has x3 = {y[2]}")
        worst = max(worst, abs(y[0] ** 2 + y[1] ** 2 - y[2] ** 2))
    return float(worst)


# classification ---------------------------------------------------------


@dataclass
class FlatClassification:
    verdict: str
    failed: str | None = None
    where: float | None = None
    deviation: float | None = None
    case: str | None = None
    C: float | None = None
    D: float | None = None
    C1: float | None = None
    C2: float | None = None
    C3: float | None = None
    Delta: float | None = None
    fitted_constants: dict = field(default_factory=dict)
    affine_map: AffineMap3 | None = None
    quadric: Quadric3 | None = None
    verify_residual: float | None = None
    reconstruction_residual: float | None = None
    borderline: bool = False
    max_r1: float | None = None
    max_r2: float | None = None
    notes: list = field(default_factory=list)

    @property
    def is_flat(self):
        return self.verdict == "Flat"

    def to_dict(self):
        out = {"verdict": self.verdict, "is_flat": self.is_flat}
        for k in (
            "failed", "where", "deviation", "case", "C", "D", "C1", "C2", "C3", "Delta",
            "verify_residual", "reconstruction_residual", "max_r1", "max_r2",
        ):
            val = getattr(self, k)
            if val is not None:
                out[k] = val
        out["borderline"] = self.borderline
        out["fitted_constants"] = dict(self.fitted_constants)
        if self.affine_map is not None:
            out["affine_map"] = self.affine_map.to_dict()
        if self.quadric is not None:
            out["quadric"] = self.quadric.to_dict()
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def sample_vs(spec, n=11):
    """Chart values ``v`` covering the surface domain, starting with the base ``v = 0``."""
    if spec.kind == "parametric":
        vs = [float(v) for v in np.linspace(*spec.domain["v"], n)]
    else:
        # v = rho_1(t1, 0) along the t1 axis
        ts = np.linspace(*spec.domain["t1"], n)
        vs = [rho_jet(spec, (float(t), 0.0), 1).derivative(1, 0) for t in ts]
    return [0.0] + [v for v in vs if v != 0.0]


def _case(C1, C2, C3, Delta, tol):
    ct = tol * max(1.0, abs(C3))
    if abs(C1) <= ct and abs(C2) <= ct:
        case = "Case1"
    elif abs(Delta) <= ct and abs(C2) > ct:
        case = "Case2"
    elif abs(C1) <= ct:
        case = "Case3_C1zero"
    else:
        case = "Case3_C1nonzero"
    # within a factor 100 of a threshold: the assignment is not robust
    borderline = any(ct / 100 < abs(x) <= ct * 100 for x in (C1, C2, Delta))
    return case, borderline


def _fitted(case, C, D, C1, C2, C3, Delta, chi):
    out = {}
    if case == "Case1":
        out["C4"] = D
        out["C5"] = chi.derivative(1)
    elif case == "Case2":
        out["C4"] = D + 2.0 * math.sqrt(C1) / (C * C2 * C2)
    else:
        out["C4"] = D + 2.0 * C2 / (C * Delta * math.sqrt(C3))
        if case == "Case3_C1zero":
            # chi = C5/(C6 tau + 1) - C5 = -C5 C6 tau + C5 C6^2 tau^2 - ...
            a1, a2 = chi.derivative(1), chi.derivative(2) / 2.0
            C6 = -a2 / a1
            out["C5"] = -a1 / C6
            out["C6"] = C6
    return out


def classify(spec, tol=DEFAULT_TOL, n_samples=11, fit_shape=(9, 9), n_check=50, seed=0):
    """Run the flatness pipeline on an admissible spec."""
    src = spec.pq_source
    vs = sample_vs(spec, n_samples)
    out = FlatClassification(verdict="NotFlat")

    r1max, where = _gate(src, vs, "r1", tol)
    out.max_r1 = r1max
    if where is not None:
        out.failed, out.where, out.deviation = "r1", where, r1max
        return out
    try:
        C, D = recover_relation(src, vs, tol)
    except NotLinearlyRelated as exc:
        out.failed, out.where, out.deviation = "relation", exc.where, _finite_or_none(exc.max_deviation)
        return out
    out.C, out.D = C, D
    r2max, where = _gate(src, vs, "r2", tol)
    out.max_r2 = r2max
    if where is not None:
        out.failed, out.where, out.deviation = "r2", where, r2max
        return out
    try:
        C1, C2, C3, Delta = recover_quadratic(src, C, vs, tol)
    except NotQuadratic as exc:
        out.failed, out.where, out.deviation = "quadratic", exc.where, _finite_or_none(exc.max_deviation)
        return out

    out.verdict = "Flat"
    out.C1, out.C2, out.C3, out.Delta = C1, C2, C3, Delta
    out.case, out.borderline = _case(C1, C2, C3, Delta, tol)

    rng = np.random.default_rng(seed)
    check = random_points(spec, n_check, rng)
    try:
        rec = chi_reconstruct(src, C, D)
        out.fitted_constants = _fitted(out.case, C, D, C1, C2, C3, Delta, rec.chi)
        out.reconstruction_residual = max(
            abs(rec(sp.t1, sp.t2) - base_point(spec, sp)[2]) for sp in check
        )
    except CRTubeError as exc:
        out.notes.append(f"reconstruction failed: {type(exc).__name__}: {exc}")

    try:
        fit = grid_points(spec, fit_shape)
        qd = fit_cone([base_point(spec, sp) for sp in fit], tol)
        centre = fit[len(fit) // 2]
        amap = cone_to_lightcone(qd, base_point(spec, centre)).compose(normalization_map(spec))
        out.quadric = qd
        out.affine_map = amap
        out.verify_residual = verify_affine_equivalence(amap, spec, check)
    except CRTubeError as exc:
        out.notes.append(f"affine normalisation failed: {type(exc).__name__}: {exc}")
    return out


def _finite_or_none(x):
    return x if x is not None and math.isfinite(x) else None


# generated flat families ------------------------------------------------


def _lit(x):
    r = repr(float(x))
    return f"({r})" if x < 0 else r


def flat_family(C1, C2, C3, C=1.0, D=0.0, domain=None):
    """Parametric spec document of a flat surface with ``(C p'')^(-2/3) = C1 v^2 + C2 v + C3``.

    The pair satisfies ``q = C (p' - D)``, ``p(0) = q(0) = 0``.
    """
    if not C3 > 0:
        raise ValueError("C3 must be positive")
    if C == 0:
        raise ValueError("C must be nonzero")
    Delta = C2 * C2 - 4.0 * C1 * C3
    if C1 == 0 and C2 == 0:
        k = 1.0 / (C * C3**1.5)
        p = f"{_lit(D)}*v + {_lit(k / 2)}*v^2"
        q = f"{_lit(C * k)}*v"
    elif Delta == 0:
        if not C1 > 0:
            raise ValueError("Delta = 0 with C2 != 0 needs C1 > 0")
        a = C2 / (2.0 * C1)
        k = math.copysign(1.0, a) / (C * C1**1.5)
        # p' - D = k (1/(2a^2) - 1/(2(v+a)^2))
        p = f"{_lit(D)}*v + {_lit(k)}*(v/{_lit(2 * a * a)} + 1/(2*(v + {_lit(a)})) - {_lit(1 / (2 * a))})"
        q = f"{_lit(C * k)}*({_lit(1 / (2 * a * a))} - 1/(2*(v + {_lit(a)})^2))"
    else:
        Q = f"({_lit(C1)}*v^2 + {_lit(C2)}*v + {_lit(C3)})"
        G0 = -2.0 * C2 / (Delta * math.sqrt(C3))
        G = f"{_lit(-2.0 / Delta)}*(2*{_lit(C1)}*v + {_lit(C2)})/sqrt{Q}"
        # p' = D + (G - G0)/C, int_0^v G = -(4/Delta)(sqrt(Q) - sqrt(C3))
        p = (
            f"{_lit(D)}*v + {_lit(1 / C)}*({_lit(-4.0 / Delta)}*(sqrt{Q} - {_lit(math.sqrt(C3))})"
            f" - {_lit(G0)}*v)"
        )
        q = f"{G} - {_lit(G0)}"
    doc = {"kind": "parametric", "p": p, "q": q}
    if domain is not None:
        doc["domain"] = {k: list(v) for k, v in domain.items()}
    return doc
