"""Oscillatory steady state of the two-state chain under g = cos(s) on (0, 1).

Here psi_t = cos(t) (-2, 1) lies in the mean-zero eigenspace of L* with
eigenvalue -3, so a_t = (3 cos t + sin t) / 10 * (-2, 1) in closed form.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from jumpresponse import (Cosine, CrossCheckFailure, Field, PeriodicDriving, StationaryChain,
                          fourier_response, monodromy, oss_derivative, oss_distribution,
                          oss_lr_jump, oss_lr_observable, oss_lr_time_integral)
from jumpresponse.models import random_chain
from jumpresponse.oss import (estimate_gap, fd_oss_observable, fd_oss_shift,
                              fourier_response_quadrature, resolvent_solver, spectrum_check)

T = 2 * math.pi
ALPHA = np.array([[0.0, 1.0], [0.0, 0.0]])


def a_exact(t):
    return (3 * math.cos(t) + math.sin(t)) / 10 * np.array([-2.0, 1.0])


@pytest.fixture
def driving(two_cos):
    r, ch, g = two_cos
    return PeriodicDriving(ch, g, T)


def test_derivative_field_closed_form(driving):
    for t in (0.0, 1.0, 2.5):
        np.testing.assert_allclose(oss_derivative(driving, t), a_exact(t), atol=1e-9)


def test_observable_response(driving):
    assert oss_lr_observable([1.0, 0.0], driving, 1.0) == pytest.approx(-0.164158527, abs=1e-9)
    assert oss_lr_observable([1.0, 0.0], driving, 1.0) == pytest.approx(a_exact(1.0)[0] / 3, abs=1e-12)


def test_time_integral_and_jump_responses(driving):
    integral_a0 = -0.2 * (3 * math.sin(1) + 1 - math.cos(1))
    assert oss_lr_time_integral([1.0, 0.0], driving, 1.0) == pytest.approx(integral_a0 / 3, abs=1e-9)
    jump = (2 / 3) * math.sin(1) + (2 / 3) * integral_a0
    assert oss_lr_jump(ALPHA, driving, 1.0) == pytest.approx(jump, abs=1e-9)


def test_fourier_response(driving):
    c1 = fourier_response([1.0, 0.0], driving, 1)
    assert c1 == pytest.approx(-0.1 + 1j / 30, abs=1e-12)
    assert fourier_response([1.0, 0.0], driving, -1) == pytest.approx(c1.conjugate(), abs=1e-12)
    assert fourier_response([1.0, 0.0], driving, 2) == 0
    assert fourier_response_quadrature([1.0, 0.0], driving, 1) == pytest.approx(c1, abs=1e-10)
    with pytest.raises(TypeError):
        fourier_response(np.array([1j, 0.0]), driving, 1)


def test_fourier_modes_reconstruct_observable_response(driving):
    t = 0.7
    c1 = fourier_response([1.0, 0.0], driving, 1)
    assert 2 * (np.exp(1j * t) * c1).real == pytest.approx(
        oss_lr_observable([1.0, 0.0], driving, t), abs=1e-12)


def test_monodromy_fixed_vector_and_fd(two_cos):
    r, ch, g = two_cos
    M = monodromy(r, g, 0.0, T)
    np.testing.assert_allclose(M.P.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(oss_distribution(M), ch.pi, atol=1e-9)
    shift = fd_oss_shift(r, g, T, lam=1e-4, pi=ch.pi)
    np.testing.assert_allclose(shift, ch.pi * a_exact(0.0), atol=1e-4)
    assert fd_oss_observable(r, g, [1.0, 0.0], T, 1.0, lam=1e-4) == pytest.approx(
        -0.164158527, abs=1e-6)


def test_random_chain_resolvent_matches_quadrature():
    r = random_chain(6, seed=13, density=0.5)
    ch = StationaryChain(r)
    g = Field.decoupled(Cosine(1.0, phase=0.3), np.random.default_rng(4).uniform(-1, 1, (6, 6)))
    drv = PeriodicDriving(ch, g, T)
    # check=True runs both algorithms and raises on disagreement
    a = oss_derivative(drv, 0.4, check=True, tol=1e-7)
    assert abs(ch.pi @ a) < 1e-12


def test_period_validation(two_cos):
    r, ch, g = two_cos
    with pytest.raises(ValueError):
        PeriodicDriving(ch, g, 3.0)
    nope = Field.from_callable(lambda s: np.zeros((2, 2)), bound=0.0)
    with pytest.raises(ValueError):
        PeriodicDriving(ch, nope, T)
    PeriodicDriving(ch, Field.static(ALPHA), 1.0)


def test_cross_check_failure_is_raised(driving, monkeypatch):
    import jumpresponse.oss as oss
    monkeypatch.setattr(oss, "oss_derivative_quadrature", lambda d, t: np.zeros(2))
    with pytest.raises(CrossCheckFailure):
        oss.oss_derivative(driving, 1.0)


def test_resolvent_and_spectrum(two):
    r, ch, g = two
    res = resolvent_solver(ch, adjoint=False)
    f = np.array([2 / 3, -1 / 3])
    np.testing.assert_allclose(res.solve(1j, f), f / (3 + 1j), atol=1e-14)
    spec = spectrum_check(ch)
    assert spec["ok"] and spec["n_zero"] == 1
    assert spec["max_nonzero_real"] == pytest.approx(-3.0)
    gap = estimate_gap(ch)
    assert gap.kappa == pytest.approx(3.0, rel=1e-6)
    assert gap.horizon(1e-10) > 0
