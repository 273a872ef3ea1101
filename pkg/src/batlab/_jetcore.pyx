# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled second-order jet kernel.

Semantics mirror ``_jetpy`` exactly (same formulas, same error types); storage
is fixed-size C arrays so an arithmetic node costs no Python allocations
beyond the result object.
"""

from libc.math cimport exp as c_exp, log as c_log, sin as c_sin, cos as c_cos, \
    sqrt as c_sqrt, pow as c_pow, isfinite

import numpy as np

from .errors import JetDomainError

BACKEND = "compiled"
MAX_ARITY = 6

DEF KMAX = 6


cdef inline int _check_arity_c(int k) except -1:
    if k < 1 or k > KMAX:
        raise ValueError(f"jet arity must be in 1..{KMAX}, got {k}")
    return 0


cdef class Jet2:
    """Value, gradient and symmetric Hessian over k variables."""

    cdef public double value
    cdef int _k
    cdef double g[KMAX]
    cdef double h[KMAX * KMAX]

    @property
    def k(self):
        return self._k

    @property
    def grad(self):
        cdef int i
        out = np.empty(self._k)
        for i in range(self._k):
            out[i] = self.g[i]
        return out

    @property
    def hess(self):
        cdef int i, j
        out = np.empty((self._k, self._k))
        for i in range(self._k):
            for j in range(self._k):
                out[i, j] = self.h[i * self._k + j]
        return out

    def __repr__(self):
        return (f"Jet2(value={self.value!r}, grad={self.grad.tolist()}, "
                f"hess={self.hess.tolist()})")

    def __add__(x, y):
        cdef Jet2 a = _coerce_pair(x, y, 0)
        cdef Jet2 b = _coerce_pair(y, x, 0)
        if a is None or b is None:
            return NotImplemented
        return _add(a, b)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(x, y):
        cdef Jet2 a = _coerce_pair(x, y, 0)
        cdef Jet2 b = _coerce_pair(y, x, 0)
        if a is None or b is None:
            return NotImplemented
        return _sub(a, b)

    def __rsub__(self, other):
        cdef Jet2 o = _coerce_pair(other, self, 0)
        if o is None:
            return NotImplemented
        return _sub(o, self)

    def __mul__(x, y):
        cdef Jet2 a = _coerce_pair(x, y, 0)
        cdef Jet2 b = _coerce_pair(y, x, 0)
        if a is None or b is None:
            return NotImplemented
        return _mul(a, b)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(x, y):
        cdef Jet2 a = _coerce_pair(x, y, 0)
        cdef Jet2 b = _coerce_pair(y, x, 0)
        if a is None or b is None:
            return NotImplemented
        return _div(a, b)

    def __rtruediv__(self, other):
        cdef Jet2 o = _coerce_pair(other, self, 0)
        if o is None:
            return NotImplemented
        return _div(o, self)

    def __neg__(self):
        cdef Jet2 r = _blank(self._k)
        cdef int i
        r.value = -self.value
        for i in range(self._k):
            r.g[i] = -self.g[i]
        for i in range(self._k * self._k):
            r.h[i] = -self.h[i]
        return r

    def __pow__(self, exponent, modulo):
        if modulo is not None or not isinstance(exponent, (int, float)):
            return NotImplemented
        return powc(self, exponent)


cdef Jet2 _blank(int k):
    cdef Jet2 r = Jet2.__new__(Jet2)
    r._k = k
    return r


cdef Jet2 _coerce_pair(object x, object other, int _unused):
    """Return x as a Jet2 matching the arity of whichever operand is a jet."""
    cdef Jet2 j
    cdef int k, i
    if isinstance(x, Jet2):
        if isinstance(other, Jet2) and (<Jet2>other)._k != (<Jet2>x)._k:
            raise ValueError(
                f"arity mismatch: {(<Jet2>x)._k} vs {(<Jet2>other)._k}")
        return <Jet2>x
    if isinstance(x, (int, float)) and isinstance(other, Jet2):
        k = (<Jet2>other)._k
        j = _blank(k)
        j.value = <double>x
        for i in range(k):
            j.g[i] = 0.0
        for i in range(k * k):
            j.h[i] = 0.0
        return j
    return None


cdef Jet2 _add(Jet2 a, Jet2 b):
    cdef Jet2 r = _blank(a._k)
    cdef int i
    r.value = a.value + b.value
    for i in range(a._k):
        r.g[i] = a.g[i] + b.g[i]
    for i in range(a._k * a._k):
        r.h[i] = a.h[i] + b.h[i]
    return r


cdef Jet2 _sub(Jet2 a, Jet2 b):
    cdef Jet2 r = _blank(a._k)
    cdef int i
    r.value = a.value - b.value
    for i in range(a._k):
        r.g[i] = a.g[i] - b.g[i]
    for i in range(a._k * a._k):
        r.h[i] = a.h[i] - b.h[i]
    return r


cdef Jet2 _mul(Jet2 a, Jet2 b):
    cdef Jet2 r = _blank(a._k)
    cdef int i, j, k = a._k
    cdef double val
    r.value = a.value * b.value
    for i in range(k):
        r.g[i] = a.g[i] * b.value + a.value * b.g[i]
    # Upper triangle mirrored so the Hessian is symmetric to the last bit.
    for i in range(k):
        for j in range(i, k):
            val = (a.h[i * k + j] * b.value + a.value * b.h[i * k + j]
                   + a.g[i] * b.g[j] + b.g[i] * a.g[j])
            r.h[i * k + j] = val
            r.h[j * k + i] = val
    return r


cdef Jet2 _div(Jet2 a, Jet2 b):
    cdef Jet2 r = _blank(a._k)
    cdef int i, j, k = a._k
    cdef double q, inv
    if b.value == 0.0:
        raise JetDomainError("div", 0.0)
    inv = 1.0 / b.value
    q = a.value * inv
    r.value = q
    for i in range(k):
        r.g[i] = (a.g[i] - q * b.g[i]) * inv
    cdef double val
    for i in range(k):
        for j in range(i, k):
            val = (a.h[i * k + j] - q * b.h[i * k + j]
                   - r.g[i] * b.g[j] - b.g[i] * r.g[j]) * inv
            r.h[i * k + j] = val
            r.h[j * k + i] = val
    _require_finite(r, "div")
    return r


cdef int _require_finite(Jet2 j, str op) except -1:
    cdef int i
    if not isfinite(j.value):
        raise JetDomainError(op, j.value)
    for i in range(j._k):
        if not isfinite(j.g[i]):
            raise JetDomainError(op, j.value)
    for i in range(j._k * j._k):
        if not isfinite(j.h[i]):
            raise JetDomainError(op, j.value)
    return 0


def variable(index, value, k):
    """Seed jet for independent variable ``index`` of ``k``."""
    cdef int ck = k, i
    _check_arity_c(ck)
    if index < 0 or index >= ck:
        raise ValueError(f"variable index {index} out of range for arity {ck}")
    cdef Jet2 r = _blank(ck)
    r.value = <double>value
    for i in range(ck):
        r.g[i] = 0.0
    for i in range(ck * ck):
        r.h[i] = 0.0
    r.g[<int>index] = 1.0
    return r


def constant(value, k):
    cdef int ck = k, i
    _check_arity_c(ck)
    cdef Jet2 r = _blank(ck)
    r.value = <double>value
    for i in range(ck):
        r.g[i] = 0.0
    for i in range(ck * ck):
        r.h[i] = 0.0
    return r


def from_parts(value, grad, hess):
    """Assemble a jet from raw arrays (e.g. finite-difference data)."""
    g = np.asarray(grad, dtype=float)
    h = np.asarray(hess, dtype=float)
    cdef int k = g.shape[0], i, j
    _check_arity_c(k)
    if h.shape != (k, k):
        raise ValueError(f"hessian shape {h.shape} does not match arity {k}")
    scale = np.abs(h).max() if h.size else 0.0
    if scale > 0.0 and np.abs(h - h.T).max() > 1e-8 * scale:
        raise ValueError("hessian is not symmetric")
    h = 0.5 * (h + h.T)
    cdef Jet2 r = _blank(k)
    r.value = <double>value
    for i in range(k):
        r.g[i] = g[i]
    for i in range(k):
        for j in range(k):
            r.h[i * k + j] = h[i, j]
    _require_finite(r, "from_parts")
    return r


cdef Jet2 _univariate(Jet2 a, str op, double f0, double f1, double f2):
    cdef Jet2 r = _blank(a._k)
    cdef int i, j, k = a._k
    cdef double val
    r.value = f0
    for i in range(k):
        r.g[i] = f1 * a.g[i]
    for i in range(k):
        for j in range(i, k):
            val = f2 * a.g[i] * a.g[j] + f1 * a.h[i * k + j]
            r.h[i * k + j] = val
            r.h[j * k + i] = val
    _require_finite(r, op)
    return r


def exp(Jet2 a):
    cdef double e
    if a.value < 709.0:
        e = c_exp(a.value)
    else:
        raise JetDomainError("exp", a.value)
    return _univariate(a, "exp", e, e, e)


def log(Jet2 a):
    if a.value <= 0.0:
        raise JetDomainError("log", a.value)
    cdef double v = a.value
    return _univariate(a, "log", c_log(v), 1.0 / v, -1.0 / (v * v))


def sin(Jet2 a):
    cdef double s = c_sin(a.value), c = c_cos(a.value)
    return _univariate(a, "sin", s, c, -s)


def cos(Jet2 a):
    cdef double s = c_sin(a.value), c = c_cos(a.value)
    return _univariate(a, "cos", c, -s, -c)


def sqrt(Jet2 a):
    if a.value <= 0.0:
        raise JetDomainError("sqrt", a.value)
    cdef double r = c_sqrt(a.value)
    return _univariate(a, "sqrt", r, 0.5 / r, -0.25 / (r * a.value))


def powc(Jet2 a, c):
    """a**c.  Integer c uses repeated multiplication (valid for any base);
    non-integer c requires a positive base."""
    cdef Jet2 result
    cdef int n, i
    if isinstance(c, float) and c.is_integer():
        c = int(c)
    if isinstance(c, int):
        n = c
        if n > 1000 or n < -1000:
            raise ValueError(f"integer exponent {c} out of supported range")
        if n < 0:
            if a.value == 0.0:
                raise JetDomainError("pow", 0.0)
            return _div(constant(1.0, a._k), powc(a, -n))
        result = constant(1.0, a._k)
        for i in range(n):
            result = _mul(result, a)
        return result
    if a.value <= 0.0:
        raise JetDomainError("pow", a.value)
    cdef double v = a.value, cc = <double>c
    return _univariate(a, "pow", c_pow(v, cc), cc * c_pow(v, cc - 1.0),
                       cc * (cc - 1.0) * c_pow(v, cc - 2.0))


FUNCTIONS = {"exp": exp, "log": log, "sin": sin, "cos": cos, "sqrt": sqrt}
