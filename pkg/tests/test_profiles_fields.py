from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from jumpresponse import Constant, Cosine, Field, Fourier, Perturbation, Polynomial
from jumpresponse.profiles import AbsProfile, profile_from_dict

PROFILES = [
    Constant(1.7),
    Cosine(1.3, amplitude=0.8, phase=0.4),
    Fourier(2.0, {0: 0.3, 1: 0.2 - 0.1j, 3: 0.05j}),
    Polynomial([1.0, -0.5, 0.25], bound=10.0),
]


def _quad(f, a, b):
    return quad(f, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


@pytest.mark.parametrize("p", PROFILES, ids=lambda p: type(p).__name__)
def test_integrals_match_quadrature(p):
    a, b = 0.3, 2.9
    assert abs(p.integral(a, b) - _quad(p, a, b)) < 1e-12
    assert abs(p.integral2(a, b) - _quad(lambda u: (b - u) * p(u), a, b)) < 1e-12


@pytest.mark.parametrize("p", PROFILES[:3], ids=lambda p: type(p).__name__)
def test_fourier_coefficients(p):
    omega = 2.0 if isinstance(p, Fourier) and not isinstance(p, Cosine) else getattr(p, "omega", 1.0)
    T = 2 * math.pi / omega
    for k in range(-3, 4):
        re = _quad(lambda s: p(s) * math.cos(k * omega * s), 0, T) / T
        im = -_quad(lambda s: p(s) * math.sin(k * omega * s), 0, T) / T
        assert abs(p.fourier_coefficient(k, omega) - complex(re, im)) < 1e-12


def test_fourier_bound_and_period():
    p = Fourier(2.0, {0: 0.3, 1: 0.2})
    assert p.bound == pytest.approx(0.7)
    assert p.period == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        Fourier(-1.0, {1: 1.0})
    with pytest.raises(ValueError):
        Fourier(1.0, {-1: 1.0})


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0), st.floats(-2.0, 2.0),
       st.floats(-10.0, 10.0), st.floats(0.0, 10.0))
def test_abs_cosine_closed_forms(omega, amplitude, phase, a, length):
    p = AbsProfile(Cosine(omega, amplitude, phase))
    b = a + length
    zeros = [((0.5 + m) * math.pi - phase) / omega for m in range(-100, 100)]
    pts = [z for z in zeros if a < z < b]
    f = lambda u: abs(amplitude * math.cos(omega * u + phase))  # noqa: E731
    ref = quad(f, a, b, points=pts or None, limit=500, epsabs=1e-12)[0]
    ref2 = quad(lambda u: (b - u) * f(u), a, b, points=pts or None, limit=500, epsabs=1e-12)[0]
    scale = 1.0 + abs(amplitude) * length * (1 + length)
    assert abs(p.integral(a, b) - ref) < 1e-9 * scale
    assert abs(p.integral2(a, b) - ref2) < 1e-9 * scale


def test_abs_profile_vectorized():
    p = AbsProfile(Cosine(1.0))
    a = np.array([0.0, 1.0, 4.0])
    b = np.array([0.5, 3.0, 9.0])
    np.testing.assert_allclose(p.integral(a, b), [p.integral(x, y) for x, y in zip(a, b)])


def test_cosine_zero_lattice():
    p = Cosine(2.0, phase=0.3)
    s0, h = p.zero_lattice()
    for m in range(5):
        assert abs(p(s0 + m * h)) < 1e-14


@pytest.mark.parametrize("p", PROFILES, ids=lambda p: type(p).__name__)
def test_profile_dict_round_trip(p):
    q = profile_from_dict(p.to_dict())
    s = np.linspace(0, 3, 7)
    np.testing.assert_allclose(q(s), p(s), atol=1e-15)


def test_field_evaluation_and_algebra():
    E = np.array([[0.0, 1.0], [-2.0, 0.0]])
    f = Field.decoupled(Cosine(1.0), E)
    np.testing.assert_allclose(f.at(0.5), math.cos(0.5) * E)
    np.testing.assert_allclose(f.at_many([0.0, 1.0])[1], math.cos(1.0) * E)
    np.testing.assert_allclose(f.transpose().at(0.0), E.T)
    np.testing.assert_allclose((f + Field.static(E)).at(0.0), 2 * E)
    np.testing.assert_allclose((f * f).at(0.2), math.cos(0.2) ** 2 * E * E)
    np.testing.assert_allclose((-f).at(0.0), -E)
    np.testing.assert_allclose(f.absolute().at(2.0), abs(math.cos(2.0)) * np.abs(E))
    assert f.bound == pytest.approx(2.0)
    assert f.period == pytest.approx(2 * math.pi)
    assert not f.is_static and Field.static(E).is_static


def test_callable_field_integral_and_fourier():
    f = Field.from_callable(lambda s: np.array([math.sin(s) ** 2, 1.0]), bound=1.0,
                            period=2 * math.pi)
    np.testing.assert_allclose(f.integral(0.0, math.pi), [math.pi / 2, math.pi], rtol=1e-10)
    np.testing.assert_allclose(f.fourier(2, 1.0), [-0.25, 0.0], atol=1e-10)


def test_perturbation_decoupled_and_spot_check():
    g = Perturbation.decoupled(Cosine(1.0, amplitude=0.5), np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert g.is_decoupled
    assert g.bound == pytest.approx(0.5)
    assert g.spot_check(np.linspace(0, 7, 20)) <= 0.5
    bad = Perturbation.general(lambda s: np.array([[0.0, 2.0], [0.0, 0.0]]), bound=1.0)
    with pytest.raises(ValueError):
        bad.spot_check([0.0])
    with pytest.raises(ValueError):
        bad.profile
