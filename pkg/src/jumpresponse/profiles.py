"""Scalar time profiles tau(s) with declared sup-norm bounds.

Each profile knows its exact primitive ``integral(a, b)`` and the
"second primitive" ``integral2(a, b) = int_a^b (b - u) tau(u) du``, which is
what path functionals need to integrate a running compensator over a
constancy segment. Fourier and polynomial profiles do this in closed form;
user callables fall back to adaptive Simpson.
"""
from __future__ import annotations

import cmath
import math

import numpy as np

from .quadrature import adaptive_simpson

_QUAD_TOL = 1e-13
_QUAD_REL = 1e-11


class TimeProfile:
    """Base class. Subclasses implement ``__call__`` and the primitives."""

    bound: float
    period: float | None = None
    bandwidth: float = 0.0

    @property
    def is_constant(self):
        return False

    def __call__(self, s):
        raise NotImplementedError

    def integral(self, a, b):
        return _vectorize_pair(lambda lo, hi: adaptive_simpson(self, lo, hi, _QUAD_TOL, _QUAD_REL),
                               a, b)

    def integral2(self, a, b):
        return _vectorize_pair(
            lambda lo, hi: adaptive_simpson(lambda u: (hi - u) * self(u), lo, hi, _QUAD_TOL,
                                            _QUAD_REL),
            a, b,
        )

    def fourier_coefficient(self, k, omega):
        """c_k = (1/T) int_0^T e^{-i k omega s} tau(s) ds with T = 2 pi / omega."""
        period = 2.0 * math.pi / omega
        if self.period is not None and not _is_multiple(period, self.period):
            raise ValueError(f"profile period {self.period} does not divide {period}")
        val = adaptive_simpson(
            lambda s: cmath.exp(-1j * k * omega * s) * self(s), 0.0, period, 1e-13, 1e-12
        )
        return val / period

    def scaled(self, c):
        return ProductProfile(Constant(c), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scaled(float(other))
        if isinstance(other, Constant):
            return self.scaled(other.value)
        return ProductProfile(self, other)

    __rmul__ = __mul__

    def absolute(self):
        return AbsProfile(self)

    def to_dict(self):
        raise TypeError(f"{type(self).__name__} is not serializable")


def _vectorize_pair(fn, a, b):
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return fn(float(a), float(b))
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = [fn(float(lo), float(hi)) for lo, hi in zip(a.ravel(), b.ravel())]
    return np.array(out).reshape(a.shape)


def _is_array(*xs):
    return any(np.ndim(x) for x in xs)


def _is_multiple(big, small, rtol=1e-10):
    ratio = big / small
    return abs(ratio - round(ratio)) <= rtol * max(1.0, ratio)


class Constant(TimeProfile):
    def __init__(self, value=1.0):
        self.value = float(value)
        self.bound = abs(self.value)

    @property
    def is_constant(self):
        return True

    def __call__(self, s):
        if np.ndim(s):
            return np.full(np.shape(s), self.value)
        return self.value

    def integral(self, a, b):
        d = np.asarray(b, dtype=float) - a if _is_array(a, b) else b - a
        return self.value * d

    def integral2(self, a, b):
        d = np.asarray(b, dtype=float) - a if _is_array(a, b) else b - a
        return 0.5 * self.value * d * d

    def fourier_coefficient(self, k, omega):
        return complex(self.value) if k == 0 else 0j

    def scaled(self, c):
        return Constant(self.value * c)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Constant(self.value * other)
        if isinstance(other, TimeProfile):
            return other.scaled(self.value)
        return NotImplemented

    __rmul__ = __mul__

    def absolute(self):
        return Constant(abs(self.value))

    def to_dict(self):
        return {"name": "constant", "value": self.value}

    def __repr__(self):
        return f"Constant({self.value!r})"


class Fourier(TimeProfile):
    """Real trigonometric polynomial  c_0 + 2 Re sum_{k>0} c_k e^{i k omega s}.

    ``coefficients`` maps nonnegative harmonics to complex amplitudes; the
    negative ones are implied by conjugate symmetry.
    """

    def __init__(self, omega, coefficients, bound=None):
        if omega <= 0:
            raise ValueError("omega must be positive")
        self.omega = float(omega)
        coeffs = {}
        for k, c in dict(coefficients).items():
            k = int(k)
            if k < 0:
                raise ValueError("give nonnegative harmonics only")
            c = complex(c)
            if k == 0:
                c = complex(c.real, 0.0)
            if c != 0:
                coeffs[k] = c
        self.coefficients = coeffs
        natural = abs(coeffs.get(0, 0.0)) + 2.0 * sum(abs(c) for k, c in coeffs.items() if k)
        self.bound = natural if bound is None else float(bound)
        self.period = 2.0 * math.pi / self.omega
        self.bandwidth = self.omega * max(coeffs, default=0)
        ks = sorted(coeffs)
        self._ks = np.array(ks, dtype=float)
        self._cs = np.array([coeffs[k] for k in ks], dtype=complex)
        self._mult = np.where(self._ks == 0, 1.0, 2.0)

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        ph = np.exp(1j * self.omega * np.multiply.outer(s_arr, self._ks))
        out = (ph * (self._mult * self._cs)).real.sum(axis=-1)
        return out if np.ndim(s) else float(out)

    def _prim(self, s):
        # antiderivative of each harmonic, k = 0 handled separately
        s_arr = np.asarray(s, dtype=float)
        ks = self._ks
        z = 1j * self.omega * np.where(ks == 0, 1.0, ks)
        ph = np.exp(np.multiply.outer(s_arr, z))
        terms = np.where(ks == 0, np.multiply.outer(s_arr, np.ones_like(ks)), ph / z)
        return terms

    def integral(self, a, b):
        diff = self._prim(b) - self._prim(a)
        out = (diff * (self._mult * self._cs)).real.sum(axis=-1)
        return out if _is_array(a, b) else float(out)

    def integral2(self, a, b):
        a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        ks = self._ks
        z = 1j * self.omega * np.where(ks == 0, 1.0, ks)
        d = np.multiply.outer(b_arr - a_arr, np.ones_like(ks))
        eza = np.exp(np.multiply.outer(a_arr, z))
        # (e^{zb} - e^{za}) / z^2 - d e^{za} / z, written via expm1 for short segments
        osc = eza * (np.expm1(d * z) - d * z) / (z * z)
        terms = np.where(ks == 0, 0.5 * d * d, osc)
        out = (terms * (self._mult * self._cs)).real.sum(axis=-1)
        return out if _is_array(a, b) else float(out)

    def fourier_coefficient(self, k, omega):
        ratio = self.omega / omega
        m = round(ratio)
        if m < 1 or abs(ratio - m) > 1e-10 * ratio:
            raise ValueError(f"profile frequency {self.omega} is not a multiple of {omega}")
        if k % m:
            return 0j
        q = k // m
        c = self.coefficients.get(abs(q), 0j)
        return c if q >= 0 else c.conjugate()

    def scaled(self, c):
        return Fourier(self.omega, {k: c * v for k, v in self.coefficients.items()},
                       bound=abs(c) * self.bound)

    def __mul__(self, other):
        if isinstance(other, Fourier) and abs(other.omega - self.omega) <= 1e-14 * self.omega:
            full_a = _two_sided(self.coefficients)
            full_b = _two_sided(other.coefficients)
            prod = {}
            for ka, ca in full_a.items():
                for kb, cb in full_b.items():
                    k = ka + kb
                    if k >= 0:
                        prod[k] = prod.get(k, 0j) + ca * cb
            return Fourier(self.omega, prod, bound=self.bound * other.bound)
        return TimeProfile.__mul__(self, other)

    __rmul__ = __mul__

    def to_dict(self):
        return {
            "name": "fourier",
            "omega": self.omega,
            "coefficients": [[k, c.real, c.imag] for k, c in sorted(self.coefficients.items())],
            "bound": self.bound,
        }

    def __repr__(self):
        return f"Fourier(omega={self.omega!r}, coefficients={self.coefficients!r})"


def _two_sided(coeffs):
    out = {}
    for k, c in coeffs.items():
        out[k] = c
        if k:
            out[-k] = c.conjugate()
    return out


class Cosine(Fourier):
    """amplitude * cos(omega s + phase)."""

    def __init__(self, omega, amplitude=1.0, phase=0.0):
        self.amplitude = float(amplitude)
        self.phase = float(phase)
        super().__init__(omega, {1: 0.5 * self.amplitude * cmath.exp(1j * self.phase)},
                         bound=abs(self.amplitude))

    def __call__(self, s):
        return self.amplitude * np.cos(self.omega * np.asarray(s, dtype=float) + self.phase) \
            if np.ndim(s) else self.amplitude * math.cos(self.omega * s + self.phase)

    def integral(self, a, b):
        w, p = self.omega, self.phase
        if _is_array(a, b):
            a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
            return self.amplitude * (np.sin(w * b + p) - np.sin(w * a + p)) / w
        return self.amplitude * (math.sin(w * b + p) - math.sin(w * a + p)) / w

    def integral2(self, a, b):
        w, p = self.omega, self.phase
        if _is_array(a, b):
            a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
            sin, cos = np.sin, np.cos
        else:
            sin, cos = math.sin, math.cos
        val = -(b - a) * sin(w * a + p) / w + (cos(w * a + p) - cos(w * b + p)) / (w * w)
        return self.amplitude * val

    def zero_lattice(self):
        """(s_0, spacing) with the zeros of the profile at s_0 + m * spacing."""
        return (0.5 * math.pi - self.phase) / self.omega, math.pi / self.omega

    def to_dict(self):
        return {"name": "cosine", "omega": self.omega, "amplitude": self.amplitude,
                "phase": self.phase}

    def __repr__(self):
        return f"Cosine(omega={self.omega!r}, amplitude={self.amplitude!r}, phase={self.phase!r})"


class Polynomial(TimeProfile):
    """Polynomial in s. The sup bound is over the horizon of use and must be declared."""

    def __init__(self, coefficients, bound):
        self.poly = np.polynomial.Polynomial(np.asarray(coefficients, dtype=float))
        self.bound = float(bound)
        self._prim = self.poly.integ()
        self._uprim = (np.polynomial.Polynomial([0.0, 1.0]) * self.poly).integ()

    def __call__(self, s):
        out = self.poly(s)
        return out if np.ndim(s) else float(out)

    def integral(self, a, b):
        out = self._prim(b) - self._prim(a)
        return out if _is_array(a, b) else float(out)

    def integral2(self, a, b):
        out = b * (self._prim(b) - self._prim(a)) - (self._uprim(b) - self._uprim(a))
        return out if _is_array(a, b) else float(out)

    def scaled(self, c):
        return Polynomial(self.poly.coef * c, abs(c) * self.bound)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial((self.poly * other.poly).coef, self.bound * other.bound)
        return TimeProfile.__mul__(self, other)

    __rmul__ = __mul__

    def to_dict(self):
        return {"name": "polynomial", "coefficients": self.poly.coef.tolist(), "bound": self.bound}


class CallableProfile(TimeProfile):
    """Wraps a user function. ``bound`` is trusted, never inferred."""

    def __init__(self, func, bound, period=None, bandwidth=1.0):
        self.func = func
        self.bound = float(bound)
        self.period = period
        self.bandwidth = float(bandwidth)

    def __call__(self, s):
        if np.ndim(s):
            return np.array([self.func(float(x)) for x in np.ravel(s)], dtype=float).reshape(np.shape(s))
        return float(self.func(s))


class ProductProfile(CallableProfile):
    def __init__(self, p, q):
        super().__init__(None, p.bound * q.bound, _joint_period(p, q), p.bandwidth + q.bandwidth)
        self.p, self.q = p, q

    def __call__(self, s):
        return self.p(s) * self.q(s)


class AbsProfile(CallableProfile):
    def __init__(self, p):
        super().__init__(None, p.bound, p.period, max(p.bandwidth, 1.0))
        self.p = p

    def __call__(self, s):
        return abs(self.p(s)) if not np.ndim(s) else np.abs(self.p(s))

    @property
    def is_constant(self):
        return self.p.is_constant

    @property
    def value(self):
        return abs(self.p.value)

    def integral(self, a, b):
        if self.p.is_constant:
            return Constant(self.value).integral(a, b)
        if isinstance(self.p, Cosine):
            out = self._cos_primitive(np.asarray(b, float)) - self._cos_primitive(np.asarray(a, float))
            return out if _is_array(a, b) else float(out)
        return super().integral(a, b)

    def integral2(self, a, b):
        if self.p.is_constant:
            return Constant(self.value).integral2(a, b)
        if isinstance(self.p, Cosine):
            a, b = np.asarray(a, float), np.asarray(b, float)
            # int_a^b (b - u) f(u) du = int_a^b F(u) du - (b - a) F(a)
            out = self._cos_second(b) - self._cos_second(a) - (b - a) * self._cos_primitive(a)
            return out if out.ndim else float(out)
        return super().integral2(a, b)

    # |cos u| has primitive P(u) = 2n + (-1)^n sin u and P has primitive
    # S(u) = 2n u - (-1)^n cos u - n^2 pi, where n = floor((u + pi/2) / pi).
    def _cos_primitive(self, s):
        w, amp = self.p.omega, abs(self.p.amplitude)
        u = w * s + self.p.phase
        n = np.floor((u + 0.5 * math.pi) / math.pi)
        return amp * (2.0 * n + (1.0 - 2.0 * (n % 2)) * np.sin(u)) / w

    def _cos_second(self, s):
        w, amp = self.p.omega, abs(self.p.amplitude)
        u = w * s + self.p.phase
        n = np.floor((u + 0.5 * math.pi) / math.pi)
        return amp * (2.0 * n * u - (1.0 - 2.0 * (n % 2)) * np.cos(u) - n * n * math.pi) / (w * w)


def _joint_period(p, q):
    if p.is_constant:
        return q.period
    if q.is_constant:
        return p.period
    if p.period is None or q.period is None:
        return None
    big, small = max(p.period, q.period), min(p.period, q.period)
    return big if _is_multiple(big, small) else None


def profile_from_dict(doc):
    name = doc.get("name")
    if name == "constant":
        return Constant(doc.get("value", 1.0))
    if name == "cosine":
        return Cosine(doc["omega"], doc.get("amplitude", 1.0), doc.get("phase", 0.0))
    if name == "fourier":
        coeffs = {int(k): complex(re, im) for k, re, im in doc["coefficients"]}
        return Fourier(doc["omega"], coeffs, bound=doc.get("bound"))
    if name == "polynomial":
        return Polynomial(doc["coefficients"], doc["bound"])
    raise ValueError(f"unknown profile name {name!r}")
