"""The flat model: forms S and T, the algebra so(3,2), its group and the isotropy subgroups.

Matrices act on C^5 in the coordinates obtained by the change ``Phi``, in
which the symmetric form is ``S`` and the Hermitian form is ``T``.  Points of
CP^4 in :func:`gamma_plus_membership` are in the original coordinates, where
the form is ``diag(1, 1, 1, -1, -1)``.

Connectedness of ``G`` cannot be tested pointwise; ``in_G_algebraic`` checks
only the defining equations and the determinant.  Elements built with
:func:`expm` from the algebra are in the identity component by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm as _scipy_expm

__all__ = [
    "S",
    "T",
    "E",
    "PHI",
    "Q_PLUS",
    "lie_algebra_element",
    "pattern_parameters",
    "random_algebra_element",
    "h1",
    "h2",
    "h1_structure_matrix",
    "is_h1_structure_matrix",
    "Predicates",
    "algebra_and_group_predicates",
    "bracket",
    "expm",
    "phi_coord_change",
    "proj_equal",
    "Membership",
    "gamma_plus_membership",
    "SemidirectResult",
    "semidirect_check",
    "run_model_checks",
]

S = np.fliplr(np.eye(5)).astype(complex)
T = np.array(
    [
        [0, 0, 0, 1, 0],
        [0, 0, 0, 0, 1],
        [0, 0, 1, 0, 0],
        [1, 0, 0, 0, 0],
        [0, 1, 0, 0, 0],
    ],
    dtype=complex,
)
E = np.diag([1.0, 1.0, 1.0, -1.0, -1.0]).astype(complex)

PHI = 0.5 * np.array(
    [
        [1, 1j, 0, -1j, -1],
        [1, -1j, 0, 1j, -1],
        [0, 0, 2, 0, 0],
        [1, 1j, 0, 1j, 1],
        [1, -1j, 0, -1j, 1],
    ],
    dtype=complex,
)

Q_PLUS = np.array([1j, 1, 0, 1, 1j], dtype=complex)


def _norm(M):
    return float(np.abs(M).max()) if np.size(M) else 0.0


# the algebra ------------------------------------------------------------


def lie_algebra_element(alpha=0, beta=0, gamma=0, sigma=0, delta=0, rho=0):
    """Pattern matrix with complex ``alpha, beta, gamma, sigma`` and imaginary ``delta, rho``."""
    a, b, g, s = (complex(x) for x in (alpha, beta, gamma, sigma))
    d, r = complex(delta), complex(rho)
    c = np.conj
    return np.array(
        [
            [a, b, g, d, 0],
            [c(b), c(a), c(g), 0, -d],
            [s, c(s), 0, -c(g), -g],
            [r, 0, -c(s), -c(a), -b],
            [0, -r, -s, -c(b), -a],
        ],
        dtype=complex,
    )


def pattern_parameters(M, tol=1e-12):
    """``(alpha, beta, gamma, sigma, delta, rho)`` if ``M`` has the algebra pattern, else None."""
    M = np.asarray(M, dtype=complex)
    if M.shape != (5, 5):
        return None
    params = (M[0, 0], M[0, 1], M[0, 2], M[2, 0], M[0, 3], M[3, 0])
    scale = max(1.0, _norm(M))
    if abs(params[4].real) > tol * scale or abs(params[5].real) > tol * scale:
        return None
    if _norm(M - lie_algebra_element(*params)) > tol * scale:
        return None
    return params


def random_algebra_element(rng, scale=1.0):
    z = rng.normal(size=(4, 2)) @ np.array([1, 1j])
    d, r = rng.normal(size=2)
    return lie_algebra_element(*(scale * z), 1j * scale * d, 1j * scale * r)


def bracket(X, Y):
    return X @ Y - Y @ X


def expm(X):
    """Matrix exponential (scaling and squaring, Pade approximant)."""
    return _scipy_expm(np.asarray(X, dtype=complex))


# subgroups --------------------------------------------------------------


def h1(A):
    A = complex(A)
    if A == 0:
        raise ValueError("A must be nonzero")
    Ab = A.conjugate()
    return np.diag([A, Ab, 1.0, 1.0 / Ab, 1.0 / A]).astype(complex)


def h2(B, Lam):
    B, Lam = complex(B), complex(Lam)
    Bb = B.conjugate()
    nb = abs(B) ** 2
    return np.array(
        [
            [1, 0, 0, 0, 0],
            [0, 1, 0, 0, 0],
            [B, Bb, 1, 0, 0],
            [Lam - nb / 2, -(Bb**2) / 2, -Bb, 1, 0],
            [-(B**2) / 2, -Lam - nb / 2, -B, 0, 1],
        ],
        dtype=complex,
    )


def _h1_params(M, tol):
    A = M[0, 0]
    if abs(A) <= tol:
        return None
    if _norm(M - h1(A)) > tol * max(1.0, _norm(M)):
        return None
    return A


def _h2_params(M, tol):
    B = M[2, 0]
    Lam = M[3, 0] + abs(B) ** 2 / 2
    if abs(Lam.real) > tol * max(1.0, abs(Lam)):
        return None
    Lam = 1j * Lam.imag
    if _norm(M - h2(B, Lam)) > tol * max(1.0, _norm(M)):
        return None
    return B, Lam


def h1_structure_matrix(a, b, lam):
    """The 4x4 matrix acting on ``(omega, theta^1, theta^1bar, phi)``; ``|a| = 1``, ``lam`` imaginary."""
    a, b, lam = complex(a), complex(b), complex(lam)
    ab, bb = a.conjugate(), b.conjugate()
    return np.array(
        [
            [1, 0, 0, 0],
            [bb, a, 0, 0],
            [-b, 0, ab, 0],
            [lam, -a * b, -ab * bb, 1],
        ],
        dtype=complex,
    )


def is_h1_structure_matrix(M, tol=1e-12):
    M = np.asarray(M, dtype=complex)
    if M.shape != (4, 4):
        return False
    a, b, lam = M[1, 1], -M[2, 0], M[3, 0]
    if abs(abs(a) - 1.0) > tol or abs(lam.real) > tol * max(1.0, abs(lam)):
        return False
    return _norm(M - h1_structure_matrix(a, b, 1j * lam.imag)) <= tol * max(1.0, _norm(M))


@dataclass(frozen=True)
class Predicates:
    in_g: bool
    in_g_pattern: bool
    in_G_algebraic: bool
    in_H1: bool
    in_H2: bool
    in_H1struct: bool

    def to_dict(self):
        return dict(self.__dict__)


def algebra_and_group_predicates(M, tol=1e-12):
    """Membership of a 5x5 matrix in the algebra, the group and the subgroups.

    ``in_g`` uses the equations ``M^t S + S M = 0``, ``M^t T + T conj(M) = 0``;
    ``in_g_pattern`` matches the explicit 10-parameter pattern.  The two agree
    for every input.  ``in_H1struct`` is membership in the subgroup
    ``{h1(A) h2(B, Lam) : |A| = 1}``, the copy of the 4x4 structure group
    inside ``H``.
    """
    M = np.asarray(M, dtype=complex)
    scale = max(1.0, _norm(M))
    in_g = (
        _norm(M.T @ S + S @ M) <= tol * scale
        and _norm(M.T @ T + T @ np.conj(M)) <= tol * scale
    )
    in_g_pattern = pattern_parameters(M, tol) is not None
    s2 = scale * scale
    in_G = (
        abs(np.linalg.det(M) - 1.0) <= tol * scale**5
        and _norm(M.T @ S @ M - S) <= tol * s2
        and _norm(M.T @ T @ np.conj(M) - T) <= tol * s2
    )
    in_H1 = _h1_params(M, tol) is not None
    in_H2 = _h2_params(M, tol) is not None
    in_H1struct = False
    A = M[0, 0]
    if abs(abs(A) - 1.0) <= tol:
        in_H1struct = _h2_params(np.linalg.inv(h1(A)) @ M, tol) is not None
    return Predicates(bool(in_g), bool(in_g_pattern), bool(in_G), in_H1, in_H2, in_H1struct)


# projective points ------------------------------------------------------


def _normalize(Z):
    Z = np.asarray(Z, dtype=complex)
    k = int(np.argmax(np.abs(Z)))
    if Z[k] == 0:
        raise ValueError("homogeneous coordinates must not all vanish")
    return Z / Z[k]


def proj_equal(Z, W, tol=1e-12):
    """Projective equality of two points of CP^4."""
    return _norm(_normalize(Z) - _normalize(W)) <= tol


def phi_coord_change(Z):
    """``Phi(Z)`` as a vector of homogeneous coordinates (linear in ``Z``)."""
    return PHI @ np.asarray(Z, dtype=complex)


@dataclass(frozen=True)
class Membership:
    on_quadric: bool
    in_D: bool
    in_Dplus: bool
    on_Gammaplus: bool

    def to_dict(self):
        return dict(self.__dict__)


def gamma_plus_membership(Z, tol=1e-12):
    """Membership of ``Z`` (original coordinates) in Q, D, D_+ and Gamma_+."""
    Z = _normalize(Z)
    sym = np.sum(np.diag(E) * Z * Z)
    herm = float(np.real(np.sum(np.diag(E).real * np.abs(Z) ** 2)))
    x, y = Z.real, Z.imag
    e = np.diag(E).real
    rr, ii, ri = e @ (x * x), e @ (y * y), e @ (x * y)
    orient = x[3] * y[4] - x[4] * y[3]
    on_q = abs(sym) <= tol
    in_D = on_q and herm < -tol
    return Membership(
        on_quadric=bool(on_q),
        in_D=bool(in_D),
        in_Dplus=bool(in_D and orient > tol),
        on_Gammaplus=bool(max(abs(rr), abs(ii), abs(ri)) <= tol and orient > tol),
    )


# H = H^1 x| H^2 ---------------------------------------------------------


@dataclass(frozen=True)
class SemidirectResult:
    ok: bool
    B_conj: complex | None
    Lam_conj: complex | None
    detail: str = ""

    def __bool__(self):
        return self.ok


def semidirect_check(A, B, Lam, tol=1e-12):
    """Check that ``h1(A) h2(B, Lam) h1(A)^-1`` is again in ``H^2``.

    Also checks that both factors satisfy the group equations.
    """
    g1, g2 = h1(A), h2(B, Lam)
    for name, g in (("h1", g1), ("h2", g2)):
        if not algebra_and_group_predicates(g, tol).in_G_algebraic:
            return SemidirectResult(False, None, None, f"{name} fails the group equations")
    conj = g1 @ g2 @ np.linalg.inv(g1)
    params = _h2_params(conj, tol)
    if params is None:
        return SemidirectResult(False, None, None, "conjugate does not have the H^2 pattern")
    return SemidirectResult(True, complex(params[0]), complex(params[1]))


# model checks -----------------------------------------------------------


def _random_violation(rng):
    M = random_algebra_element(rng)
    i, j = rng.integers(0, 5, size=2)
    M[i, j] += complex(*rng.normal(size=2)) + 0.5
    return M


def run_model_checks(seed=0, trials=200):
    """The model-geometry property suite; returns ``[(name, passed, detail)]``."""
    rng = np.random.default_rng(seed)
    out = []

    q = phi_coord_change(Q_PLUS)
    out.append(("phi_q_plus", proj_equal(q, [0, 0, 0, 1, 0]), f"Phi(q+) = {np.round(_normalize(q), 15).tolist()}"))
    Pi = np.linalg.inv(PHI)
    dev = max(_norm(Pi.T @ E @ Pi - S), _norm(Pi.conj().T @ E @ Pi - T))
    out.append(("form_transport", bool(dev <= 1e-12), f"max deviation {dev:.3g}"))
    out.append(("q_plus_on_gamma_plus", gamma_plus_membership(Q_PLUS).on_Gammaplus, ""))

    bad = 0
    for _ in range(trials):
        p = algebra_and_group_predicates(random_algebra_element(rng))
        n = algebra_and_group_predicates(_random_violation(rng))
        if not (p.in_g and p.in_g_pattern) or n.in_g or n.in_g_pattern:
            bad += 1
    out.append(("pattern_equation_equivalence", bad == 0, f"{trials} trials, {bad} mismatches"))

    bad = sum(
        not algebra_and_group_predicates(bracket(random_algebra_element(rng), random_algebra_element(rng))).in_g
        for _ in range(trials)
    )
    out.append(("bracket_closure", bad == 0, f"{trials} trials, {bad} failures"))

    bad = 0
    for _ in range(trials):
        A = complex(*rng.normal(size=2))
        B = complex(*rng.normal(size=2))
        if not semidirect_check(A, B, 1j * rng.normal(), tol=1e-10):
            bad += 1
    out.append(("h1_normalizes_h2", bad == 0, f"{trials} trials, {bad} failures"))

    worst = 0.0
    n_exp = 50
    for _ in range(n_exp):
        g = expm(random_algebra_element(rng))
        s2 = max(1.0, _norm(g)) ** 2
        worst = max(
            worst,
            abs(np.linalg.det(g) - 1.0),
            _norm(g.T @ S @ g - S) / s2,
            _norm(g.T @ T @ np.conj(g) - T) / s2,
        )
    out.append(("exp_in_group", bool(worst <= 1e-9), f"{n_exp} samples, max deviation {worst:.3g}"))

    fails = 0
    for _ in range(n_exp):
        g = expm(random_algebra_element(rng, scale=0.3))
        Z = Pi @ (g @ q)
        if not gamma_plus_membership(Z, tol=1e-9).on_Gammaplus:
            fails += 1
    out.append(("gamma_plus_invariant", fails == 0, f"{n_exp} samples, {fails} failures"))
    return out
