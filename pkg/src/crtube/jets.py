"""Truncated Taylor expansions (jets) in one and two real variables.

A jet of degree ``d`` stores the Taylor coefficients of a function at a base
point up to total degree ``d``.  Arithmetic is exact on the represented
truncated series, so derivatives of any expression built from jets are exact
up to floating point rounding.

Binary operations between jets of different degree truncate to the smaller
degree; the result is only known to that order.  The functional form
:func:`jet_arith` is stricter and rejects mismatched degrees.
"""

from __future__ import annotations

import math
from functools import lru_cache
from numbers import Real

import numpy as np

from .errors import DegreeExhausted, DivisionByZeroJet, NonPositiveBase, SingularImplicit

__all__ = [
    "Jet1",
    "Jet2",
    "jet_arith",
    "jet_pow_real",
    "jet_partial",
    "jet_solve_implicit",
    "DEFAULT_DEGREE",
]

DEFAULT_DEGREE = 5


@lru_cache(maxsize=None)
def _triangle(degree):
    """Index tables for the monomials t1^i t2^j with i + j <= degree."""
    idx = [(i, n - i) for n in range(degree + 1) for i in range(n, -1, -1)]
    I = np.array([i for i, _ in idx], dtype=np.intp)
    J = np.array([j for _, j in idx], dtype=np.intp)
    pos = {m: k for k, m in enumerate(idx)}
    left, right, out = [], [], []
    for ka, (ia, ja) in enumerate(idx):
        for kb, (ib, jb) in enumerate(idx):
            if ia + ib + ja + jb <= degree:
                left.append(ka)
                right.append(kb)
                out.append(pos[(ia + ib, ja + jb)])
    return (
        I,
        J,
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(out, dtype=np.intp),
    )


def _binomial_series(alpha, degree):
    c = np.empty(degree + 1)
    c[0] = 1.0
    for k in range(1, degree + 1):
        c[k] = c[k - 1] * (alpha - k + 1) / k
    return c


class _Jet:
    __slots__ = ("_c", "degree")

    nvars = 0

    def _new(self, coeffs, degree):
        out = object.__new__(type(self))
        coeffs.flags.writeable = False
        out._c = coeffs
        out.degree = degree
        return out

    @property
    def coeffs(self):
        """Read-only coefficient array."""
        return self._c

    @property
    def value(self):
        return float(self._c.flat[0])

    # ring operations -------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, _Jet):
            if type(other) is not type(self):
                raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
            return other
        if isinstance(other, Real):
            return type(self).constant(float(other), self.degree)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, Real):
            c = self._c.copy()
            c.flat[0] += other
            return self._new(c, self.degree)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        d = min(self.degree, other.degree)
        return self._new(self._trunc(d) + other._trunc(d), d)

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self._c, self.degree)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, Real):
            return self + (-other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Real):
            return self._new(self._c * float(other), self.degree)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        d = min(self.degree, other.degree)
        return self._new(self._mul(self._trunc(d), other._trunc(d), d), d)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Real):
            if other == 0:
                raise DivisionByZeroJet("division by zero scalar")
            return self._new(self._c / float(other), self.degree)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self._div(other)

    def __rtruediv__(self, other):
        return type(self).constant(float(other), self.degree)._div(self)

    def __pow__(self, n):
        if isinstance(n, (int, np.integer)):
            n = int(n)
            if n < 0:
                return 1.0 / (self ** (-n))
            result = type(self).constant(1.0, self.degree)
            base = self
            while n:
                if n & 1:
                    result = result * base
                n >>= 1
                if n:
                    base = base * base
            return result
        return self.pow_real(float(n))

    def _div(self, other):
        b0 = other.value
        if b0 == 0.0:
            raise DivisionByZeroJet("divisor jet has zero constant term")
        d = min(self.degree, other.degree)
        a = self._trunc(d)
        tail = other._trunc(d).copy()
        tail.flat[0] = 0.0
        c = np.zeros_like(a)
        # Coefficients of total degree n depend only on lower orders of c.
        for n in range(d + 1):
            t = self._mul(tail, c, d)
            mask = self._order_mask(d) == n
            c[mask] = (a[mask] - t[mask]) / b0
        return self._new(c, d)

    def pow_real(self, alpha):
        """``self ** alpha`` for real ``alpha``; the constant term must be positive."""
        a0 = self.value
        if not a0 > 0.0:
            raise NonPositiveBase(f"real power {alpha} of jet with constant term {a0}")
        if alpha == 1:
            return self
        x = (self - a0) / a0
        series = _binomial_series(alpha, self.degree)
        result = type(self).constant(series[-1], self.degree)
        for ck in series[-2::-1]:
            result = result * x + ck
        return result * (a0 ** alpha)

    def sqrt(self):
        return self.pow_real(0.5)

    def truncate(self, degree):
        if degree > self.degree:
            raise DegreeExhausted(f"cannot raise degree {self.degree} to {degree}")
        return self._new(self._trunc(degree).copy(), degree)

    def _padded(self, degree):
        if degree <= self.degree:
            return self._new(self._trunc(degree).copy(), degree)
        shape = (degree + 1,) * self.nvars
        c = np.zeros(shape)
        c[tuple(slice(0, self.degree + 1) for _ in range(self.nvars))] = self._c
        return self._new(c, degree)

    def max_abs(self):
        return float(np.max(np.abs(self._c)))

    def allclose(self, other, atol=0.0, rtol=1e-12):
        d = min(self.degree, other.degree)
        return bool(np.allclose(self._trunc(d), other._trunc(d), atol=atol, rtol=rtol))

    def __repr__(self):
        return f"{type(self).__name__}(degree={self.degree}, coeffs={self._c.tolist()!r})"


class Jet1(_Jet):
    """Univariate jet: ``coeffs[k]`` is the coefficient of ``s**k``."""

    __slots__ = ()
    nvars = 1

    def __init__(self, coeffs, degree=None):
        c = np.asarray(coeffs, dtype=float).ravel()
        if degree is None:
            degree = len(c) - 1
        if degree < 0:
            raise ValueError("degree must be >= 0")
        full = np.zeros(degree + 1)
        n = min(len(c), degree + 1)
        full[:n] = c[:n]
        full.flags.writeable = False
        self._c = full
        self.degree = degree

    @classmethod
    def constant(cls, value, degree=DEFAULT_DEGREE):
        c = np.zeros(degree + 1)
        c[0] = value
        return cls(c, degree)

    @classmethod
    def variable(cls, base=0.0, degree=DEFAULT_DEGREE):
        c = np.zeros(degree + 1)
        c[0] = base
        if degree >= 1:
            c[1] = 1.0
        return cls(c, degree)

    def _trunc(self, d):
        return self._c[: d + 1]

    @staticmethod
    def _mul(a, b, d):
        return np.convolve(a, b)[: d + 1]

    def _order_mask(self, d):
        return np.arange(d + 1)

    def derivative(self, k=1):
        """k-th derivative at the base point."""
        if k > self.degree:
            raise DegreeExhausted(f"derivative of order {k} from degree {self.degree} jet")
        return math.factorial(k) * float(self._c[k])

    def derivatives(self):
        return [self.derivative(k) for k in range(self.degree + 1)]

    def diff(self):
        """Jet of the derivative (degree drops by one)."""
        if self.degree == 0:
            raise DegreeExhausted("cannot differentiate a degree-0 jet")
        k = np.arange(1, self.degree + 1)
        return Jet1(self._c[1:] * k, self.degree - 1)

    def integrate(self, constant=0.0):
        """Antiderivative with the given value at the base (degree rises by one)."""
        c = np.empty(self.degree + 2)
        c[0] = constant
        c[1:] = self._c / np.arange(1, self.degree + 2)
        return Jet1(c, self.degree + 1)

    def divide_by_variable(self):
        """``f(s) / s`` for a jet with vanishing constant term."""
        if abs(self._c[0]) > 0.0:
            raise DivisionByZeroJet("f(s)/s needs f(0) = 0")
        if self.degree == 0:
            raise DegreeExhausted("degree-0 jet has nothing left after division by s")
        return Jet1(self._c[1:], self.degree - 1)

    def __call__(self, ds):
        """Evaluate the truncated polynomial at offset ``ds`` from the base."""
        return float(np.polynomial.polynomial.polyval(ds, self._c))

    def recenter(self, ds):
        """Re-expand the truncated polynomial around ``base + ds``.

        Exact only when the jet represents a polynomial of degree <= its
        truncation degree; otherwise the top coefficients carry truncation
        error.
        """
        d = self.degree
        c = np.zeros(d + 1)
        for k in range(d + 1):
            tail = self._c[k:]
            binom = np.array([math.comb(m, k) for m in range(k, d + 1)], dtype=float)
            c[k] = float(np.sum(tail * binom * ds ** np.arange(d - k + 1)))
        return Jet1(c, d)

    def compose(self, inner):
        """``f(base + inner)`` where ``inner`` is a jet with zero constant term.

        ``inner`` may be a :class:`Jet1` or :class:`Jet2`; the result has its type.
        """
        if abs(inner.value) > 0.0:
            raise ValueError("inner jet must have zero constant term")
        d = min(self.degree, inner.degree)
        result = type(inner).constant(float(self._c[d]), d)
        for ck in self._c[d - 1 :: -1] if d > 0 else ():
            result = result * inner + float(ck)
        return result


class Jet2(_Jet):
    """Bivariate jet: ``coeffs[i, j]`` is the coefficient of ``t1**i t2**j``.

    Entries with ``i + j > degree`` are always zero.
    """

    __slots__ = ()
    nvars = 2

    def __init__(self, coeffs, degree=None):
        if isinstance(coeffs, dict):
            if degree is None:
                degree = max((i + j for i, j in coeffs), default=0)
            full = np.zeros((degree + 1, degree + 1))
            for (i, j), val in coeffs.items():
                if i < 0 or j < 0:
                    raise ValueError(f"negative exponent {(i, j)}")
                if i + j <= degree:
                    full[i, j] = val
        else:
            c = np.asarray(coeffs, dtype=float)
            if c.ndim != 2:
                raise ValueError("Jet2 coefficients must be a 2-d array or a dict")
            if degree is None:
                degree = max(c.shape) - 1
            full = np.zeros((degree + 1, degree + 1))
            n0, n1 = min(c.shape[0], degree + 1), min(c.shape[1], degree + 1)
            full[:n0, :n1] = c[:n0, :n1]
            full[self._order_grid(degree) > degree] = 0.0
        if degree < 0:
            raise ValueError("degree must be >= 0")
        full.flags.writeable = False
        self._c = full
        self.degree = degree

    @staticmethod
    def _order_grid(d):
        i = np.arange(d + 1)
        return i[:, None] + i[None, :]

    @classmethod
    def constant(cls, value, degree=DEFAULT_DEGREE):
        c = np.zeros((degree + 1, degree + 1))
        c[0, 0] = value
        return cls(c, degree)

    @classmethod
    def variable(cls, axis, base=0.0, degree=DEFAULT_DEGREE):
        """Jet of the coordinate function ``t1`` (axis 1) or ``t2`` (axis 2)."""
        if axis not in (1, 2):
            raise ValueError("axis must be 1 or 2")
        c = np.zeros((degree + 1, degree + 1))
        c[0, 0] = base
        if degree >= 1:
            c[(1, 0) if axis == 1 else (0, 1)] = 1.0
        return cls(c, degree)

    def _trunc(self, d):
        if d == self.degree:
            return self._c
        return self._c[: d + 1, : d + 1]

    @staticmethod
    def _mul(a, b, d):
        I, J, left, right, out = _triangle(d)
        av = a[I, J]
        bv = b[I, J]
        flat = np.bincount(out, weights=av[left] * bv[right], minlength=len(I))
        c = np.zeros((d + 1, d + 1))
        c[I, J] = flat
        return c

    def _order_mask(self, d):
        return self._order_grid(d)

    def __getitem__(self, ij):
        i, j = ij
        if i + j > self.degree:
            return 0.0
        return float(self._c[i, j])

    def derivative(self, i, j=0):
        """Mixed partial d^(i+j) / dt1^i dt2^j at the base point."""
        if i + j > self.degree:
            raise DegreeExhausted(f"partial of order {i + j} from degree {self.degree} jet")
        return math.factorial(i) * math.factorial(j) * float(self._c[i, j])

    def partial(self, axis):
        """Jet of the partial derivative along ``axis`` (degree drops by one)."""
        d = self.degree
        if d == 0:
            raise DegreeExhausted("cannot differentiate a degree-0 jet")
        k = np.arange(1, d + 1, dtype=float)
        if axis == 1:
            c = self._c[1:, :d] * k[:, None]
        elif axis == 2:
            c = self._c[:d, 1:] * k[None, :]
        else:
            raise ValueError("axis must be 1 or 2")
        return Jet2(c, d - 1)

    def restrict(self, axis):
        """Jet1 along the ``axis`` direction with the other coordinate at its base."""
        if axis == 1:
            return Jet1(self._c[:, 0], self.degree)
        if axis == 2:
            return Jet1(self._c[0, :], self.degree)
        raise ValueError("axis must be 1 or 2")

    def __call__(self, dt1, dt2):
        """Evaluate the truncated polynomial at offset ``(dt1, dt2)``."""
        return float(np.polynomial.polynomial.polyval2d(dt1, dt2, self._c))

    def as_dict(self, atol=0.0):
        d = self.degree
        return {
            (i, j): float(self._c[i, j])
            for i in range(d + 1)
            for j in range(d + 1 - i)
            if abs(self._c[i, j]) > atol
        }


def _check_same(a, b):
    if type(a) is not type(b):
        raise TypeError("jet types differ")
    if a.degree != b.degree:
        raise ValueError(f"degree mismatch: {a.degree} vs {b.degree}")


def jet_arith(a, b, op):
    """Apply ``op`` (add, sub, mul, div) to two jets of equal degree."""
    _check_same(a, b)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown op {op!r}")


def jet_pow_real(a, alpha):
    return a.pow_real(alpha)


def jet_partial(a, axis):
    return a.partial(axis)


def jet_solve_implicit(residual, d_residual, like, max_iter=None):
    """Solve ``residual(v) = 0`` for a jet ``v`` with zero constant term.

    ``residual`` and ``d_residual`` map a jet ``v`` (same type and degree as
    ``like``) to the residual jet and its derivative with respect to ``v``.
    Newton's method on jets doubles the number of correct orders per step.
    A derivative jet of lower degree is zero-padded; it then only acts as a
    preconditioner and the iteration gains at least one order per step.
    """
    d = like.degree
    if max_iter is None:
        max_iter = 2 * d + 6
    v = type(like).constant(0.0, d)
    prev = math.inf
    for _ in range(max_iter):
        f = residual(v)
        df = d_residual(v)
        if df.value == 0.0:
            raise SingularImplicit("d residual / dv vanishes at the base point")
        if f.degree < d:
            raise SingularImplicit(f"residual only known to degree {f.degree} < {d}")
        step = f / df._padded(d)
        # v has zero constant term by definition; a rounding-level mismatch
        # of the residual at the base must not leak into it.
        step = step - step.value
        v = v - step
        size = step.max_abs()
        scale = max(1.0, v.max_abs())
        if size <= 1e-15 * scale:
            return v
        # Stalled at the rounding floor: further steps only shuffle noise.
        if size <= 1e-12 * scale and size >= 0.5 * prev:
            return v
        prev = size
    raise SingularImplicit("Newton iteration on jets did not converge")
