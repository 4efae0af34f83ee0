"""Space-time fields  f(s, .) = sum_m tau_m(s) F_m  on states or ordered pairs.

A field is either a finite sum of separable terms (a time profile times a
static array) or a user callable ``s -> array``. Perturbations ``g``,
observables ``v(s, x)`` and jump weights ``alpha(s, x, y)`` are all fields;
separable terms keep every path integral in closed form.
"""
from __future__ import annotations

import numpy as np

from .profiles import AbsProfile, Constant, TimeProfile, _is_multiple
from .quadrature import adaptive_simpson


class Field:
    # optional (profile, E, fn) with values fn(profile(s), E), elementwise and vectorized
    pointwise = None

    def __init__(self, terms=(), func=None, shape=None, bound=None, period=None, bandwidth=1.0):
        terms = tuple((p, _frozen(F)) for p, F in terms)
        if func is None and not terms:
            raise ValueError("a field needs terms or a callable")
        if terms:
            shapes = {F.shape for _, F in terms}
            if len(shapes) != 1:
                raise ValueError(f"inconsistent term shapes {shapes}")
            shape = shapes.pop()
        elif shape is None:
            shape = np.shape(func(0.0))
        if func is not None and terms:
            raise ValueError("mix of terms and callable is not supported")
        self.terms = terms
        self.func = func
        self.shape = tuple(shape)
        self._declared_bound = bound
        self._declared_period = period
        self._declared_bandwidth = bandwidth

    # -- constructors -------------------------------------------------
    @classmethod
    def static(cls, values):
        return cls([(Constant(1.0), np.asarray(values, dtype=float))])

    @classmethod
    def decoupled(cls, profile, values):
        return cls([(profile, np.asarray(values, dtype=float))])

    @classmethod
    def from_callable(cls, func, bound=None, period=None, bandwidth=1.0):
        return cls(func=func, bound=bound, period=period, bandwidth=bandwidth)

    @classmethod
    def zeros(cls, shape):
        return cls.static(np.zeros(shape))

    # -- structure ----------------------------------------------------
    @property
    def is_static(self):
        return self.func is None and all(p.is_constant for p, _ in self.terms)

    @property
    def is_zero(self):
        return self.func is None and all(p.bound == 0 or not np.any(F) for p, F in self.terms)

    @property
    def static_value(self):
        if not self.is_static:
            raise ValueError("field is time dependent")
        return sum(p.value * F for p, F in self.terms)

    @property
    def period(self):
        if self.func is not None:
            return self._declared_period
        periods = [p.period for p, _ in self.terms if not p.is_constant]
        if any(q is None for q in periods):
            return None
        if not periods:
            return None
        big = max(periods)
        if all(_is_multiple(big, q) for q in periods):
            return big
        return None

    @property
    def bandwidth(self):
        if self.func is not None:
            return self._declared_bandwidth
        return max((p.bandwidth for p, _ in self.terms), default=0.0)

    @property
    def bound(self):
        """Declared sup-norm bound, from profile bounds times max |F_m|."""
        if self.func is not None:
            if self._declared_bound is None:
                raise ValueError("callable field has no declared bound")
            return float(self._declared_bound)
        return float(sum(p.bound * np.max(np.abs(F), initial=0.0) for p, F in self.terms))

    # -- evaluation ---------------------------------------------------
    def at(self, s):
        if self.func is not None:
            return np.asarray(self.func(float(s)), dtype=float)
        out = np.zeros(self.shape)
        for p, F in self.terms:
            out = out + p(float(s)) * F
        return out

    def at_many(self, s):
        """Values at an array of times, stacked along a leading axis."""
        s = np.asarray(s, dtype=float)
        if self.func is not None:
            return np.stack([self.at(x) for x in s])
        out = np.zeros((len(s),) + self.shape)
        for p, F in self.terms:
            out += np.multiply.outer(np.asarray(p(s), dtype=float), F)
        return out

    __call__ = at

    def integral(self, a, b):
        """int_a^b f(s) ds as an array."""
        if self.func is not None:
            return adaptive_simpson(self.at, a, b, 1e-13, 1e-11)
        return sum(p.integral(a, b) * F for p, F in self.terms)

    def integral2(self, a, b):
        """int_a^b (b - u) f(u) du as an array."""
        if self.func is not None:
            return adaptive_simpson(lambda u: (b - u) * self.at(u), a, b, 1e-13, 1e-11)
        return sum(p.integral2(a, b) * F for p, F in self.terms)

    def fourier(self, k, omega):
        """Fourier coefficient of order k at base frequency omega (complex array)."""
        if self.func is not None:
            period = 2.0 * np.pi / omega
            val = adaptive_simpson(lambda s: np.exp(-1j * k * omega * s) * self.at(s),
                                   0.0, period, 1e-13, 1e-12)
            return val / period
        out = np.zeros(self.shape, dtype=complex)
        for p, F in self.terms:
            out = out + p.fourier_coefficient(k, omega) * F
        return out

    # -- algebra ------------------------------------------------------
    def map_static(self, fn):
        """Apply a linear map to every static array (e.g. contraction)."""
        if self.func is not None:
            func = self.func
            return Field(func=lambda s: fn(np.asarray(func(s), dtype=float)),
                         period=self._declared_period, bandwidth=self._declared_bandwidth,
                         bound=None)
        return Field([(p, fn(F)) for p, F in self.terms])

    def transpose(self):
        """Field of g*(s, x, y) = g(s, y, x)."""
        return self.map_static(lambda F: np.swapaxes(F, -1, -2))

    def contract(self, rates):
        """The contraction  f_r(s, x) = sum_y f(s, x, y) r(x, y)."""
        from .core import contract_array
        return self.map_static(lambda F: contract_array(F, rates))

    def absolute(self):
        if self.func is not None:
            func = self.func
            return Field(func=lambda s: np.abs(func(s)), bound=self._declared_bound,
                         period=self._declared_period, bandwidth=self._declared_bandwidth)
        if self.is_static:
            return Field.static(np.abs(self.static_value))
        if len(self.terms) == 1:
            p, F = self.terms[0]
            return Field([(AbsProfile(p), np.abs(F))])
        return Field(func=lambda s: np.abs(self.at(s)), bound=self.bound, period=self.period,
                     bandwidth=max(self.bandwidth, 1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.map_static(lambda F: other * F)
        if not isinstance(other, Field):
            return NotImplemented
        if self.func is None and other.func is None:
            return Field([(p * q, F * G) for p, F in self.terms for q, G in other.terms])
        a, b = self, other
        return Field(func=lambda s: a.at(s) * b.at(s),
                     bound=_safe_bound(a) * _safe_bound(b),
                     period=_common_period(a, b), bandwidth=a.bandwidth + b.bandwidth)

    __rmul__ = __mul__

    def __add__(self, other):
        if self.func is None and other.func is None:
            return Field(self.terms + other.terms)
        a, b = self, other
        return Field(func=lambda s: a.at(s) + b.at(s), bound=_safe_bound(a) + _safe_bound(b),
                     period=_common_period(a, b), bandwidth=max(a.bandwidth, b.bandwidth))

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __repr__(self):
        if self.func is not None:
            return f"Field(callable, shape={self.shape})"
        return f"Field({len(self.terms)} terms, shape={self.shape})"


def _frozen(F):
    F = np.array(F, dtype=float)
    F.setflags(write=False)
    return F


def _safe_bound(f):
    try:
        return f.bound
    except ValueError:
        return float("inf")


def _common_period(a, b):
    pa, pb = a.period, b.period
    if a.is_static:
        return pb
    if b.is_static:
        return pa
    if pa is None or pb is None:
        return None
    big, small = max(pa, pb), min(pa, pb)
    return big if _is_multiple(big, small) else None


class Perturbation(Field):
    """Bounded perturbation g(t, x, y) of the jump rates.

    ``bound`` is the declared sup norm used by the thinning sampler and the
    weight guards. For separable terms it is derived from each profile's
    declared bound; a callable must declare it.
    """

    @classmethod
    def decoupled(cls, profile: TimeProfile, E):
        return cls([(profile, np.asarray(E, dtype=float))])

    @classmethod
    def general(cls, func, bound, period=None, bandwidth=1.0):
        return cls(func=func, bound=bound, period=period, bandwidth=bandwidth)

    @classmethod
    def from_field(cls, field: Field):
        return cls(field.terms, func=field.func, shape=field.shape, bound=field._declared_bound,
                   period=field._declared_period, bandwidth=field._declared_bandwidth)

    @property
    def is_decoupled(self):
        return self.func is None and len(self.terms) == 1

    @property
    def profile(self):
        if not self.is_decoupled:
            raise ValueError("perturbation is not of decoupled form")
        return self.terms[0][0]

    @property
    def E(self):
        if not self.is_decoupled:
            raise ValueError("perturbation is not of decoupled form")
        return self.terms[0][1]

    def spot_check(self, times):
        """Largest |g| seen at the given times; raises if it exceeds the declared bound."""
        worst = 0.0
        for s in times:
            worst = max(worst, float(np.max(np.abs(self.at(s)))))
        if worst > self.bound * (1 + 1e-12) + 1e-15:
            raise ValueError(f"|g| = {worst} exceeds declared bound {self.bound}")
        return worst
