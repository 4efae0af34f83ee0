"""Deterministic response formulas against closed forms for the two-state chain.

For r(0, 1) = a = 2, r(1, 0) = b = 1 and g supported on the edge (0, 1),
the stationary chain starts from pi = (1/3, 2/3) and the first-order
marginal correction m = (m0, -m0) solves  m0' = -3 m0 - (2/3) tau(s).
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from jumpresponse import (Cosine, Field, PerturbedKernel, StationaryChain, kolmogorov_forward,
                          lr_jump_stationary, lr_observable_stationary,
                          lr_time_integral_stationary, response_sensitivity)
from jumpresponse.models import random_chain
from jumpresponse.response_exact import Propagator, correlation

E3 = math.exp(-3.0)
# static g = 1: m0(t) = -(2/9)(1 - e^{-3t})
STATIC_OBS = -(2 / 9) * (1 - E3)
STATIC_INT = -(2 / 9) * (1 - (1 - E3) / 3)
STATIC_JUMP = 2 / 3 + 2 * STATIC_INT
# g = cos s: m0(t) = -(2/30)(3 cos t + sin t - 3 e^{-3t})
COS_OBS = -(1 / 15) * (3 * math.cos(1) + math.sin(1) - 3 * E3)
COS_INT = -(1 / 15) * (3 * math.sin(1) + 1 - math.cos(1) - (1 - E3))
COS_JUMP = 2 * COS_INT + (2 / 3) * math.sin(1)
ALPHA = np.array([[0.0, 1.0], [0.0, 0.0]])


def test_frozen_values_agree_with_closed_forms():
    assert STATIC_OBS == pytest.approx(-0.21115842925, abs=1e-11)
    assert STATIC_INT == pytest.approx(-0.15183607913, abs=1e-11)
    assert STATIC_JUMP == pytest.approx(0.36299450839, abs=1e-11)
    assert COS_OBS == pytest.approx(-0.154201113, abs=1e-9)
    assert COS_INT == pytest.approx(-0.135593181, abs=1e-9)
    assert COS_JUMP == pytest.approx(0.289794294, abs=1e-9)


@pytest.mark.parametrize("form", ["shifted", "direct"])
def test_static_observable(two, form):
    r, ch, g = two
    assert lr_observable_stationary(ch, [1.0, 0.0], g, 1.0, form=form) == pytest.approx(
        STATIC_OBS, abs=1e-9)


def test_static_time_integral_and_jump(two):
    r, ch, g = two
    assert lr_time_integral_stationary(ch, [1.0, 0.0], g, 1.0) == pytest.approx(STATIC_INT, abs=1e-8)
    assert lr_jump_stationary(ch, ALPHA, g, 1.0) == pytest.approx(STATIC_JUMP, abs=1e-8)


def test_cosine_perturbation(two_cos):
    r, ch, g = two_cos
    assert lr_observable_stationary(ch, [1.0, 0.0], g, 1.0) == pytest.approx(COS_OBS, abs=1e-9)
    assert lr_time_integral_stationary(ch, [1.0, 0.0], g, 1.0) == pytest.approx(COS_INT, abs=1e-8)
    assert lr_jump_stationary(ch, ALPHA, g, 1.0) == pytest.approx(COS_JUMP, abs=1e-8)


def test_sensitivity_equations_match_closed_forms(two_cos):
    r, ch, g = two_cos
    out = response_sensitivity(r, g, ch.pi, 1.0, v=[1.0, 0.0], alpha=ALPHA)
    assert out["observable"] == pytest.approx(COS_OBS, abs=1e-10)
    assert out["time_integral"] == pytest.approx(COS_INT, abs=1e-10)
    assert out["jump"] == pytest.approx(COS_JUMP, abs=1e-10)
    assert abs(out["marginal_derivative"].sum()) < 1e-12


def test_sensitivity_matches_fd_of_forward_equation_off_stationarity():
    r = random_chain(5, seed=7, density=0.6)
    rng = np.random.default_rng(3)
    g = Field.decoupled(Cosine(2.0, phase=0.5), rng.uniform(-1, 1, (5, 5)))
    v = rng.normal(size=5)
    out = response_sensitivity(r, g, 2, 1.5, v=v)
    h = 1e-4
    plus = kolmogorov_forward(PerturbedKernel(r, g, h), 2, 1.5).at(-1) @ v
    minus = kolmogorov_forward(PerturbedKernel(r, -g, h), 2, 1.5).at(-1) @ v
    assert out["observable"] == pytest.approx((plus - minus) / (2 * h), abs=1e-7)


def test_shifted_and_direct_forms_agree_on_random_chain():
    r = random_chain(6, seed=11, density=0.5)
    ch = StationaryChain(r)
    g = Field.decoupled(Cosine(1.0), np.random.default_rng(2).uniform(-1, 1, (6, 6)))
    v = np.arange(6.0)
    a = lr_observable_stationary(ch, v, g, 2.0, form="shifted")
    b = lr_observable_stationary(ch, v, g, 2.0, form="direct")
    assert a == pytest.approx(b, abs=1e-8)
    with pytest.raises(ValueError):
        lr_observable_stationary(ch, v, g, 2.0, form="other")


def test_propagator_methods_agree():
    r = random_chain(8, seed=4, density=0.4)
    Q = r.generator()
    a = Propagator(Q, method="expm")
    b = Propagator(Q, method="uniformization")
    f = np.linspace(-1, 1, 8)
    for s in (0.0, 0.3, 5.0, 40.0):
        np.testing.assert_allclose(a.apply(f, s), b.apply(f, s), atol=1e-12)
        np.testing.assert_allclose(a.apply_left(f, s), b.apply_left(f, s), atol=1e-12)
    with pytest.raises(ValueError):
        a.matrix(-1.0)
    with pytest.raises(ValueError):
        Propagator(Q, method="krylov")


def test_correlation_decays_to_product_of_means(two):
    r, ch, g = two
    psi = ch.psi(g.at(0.0))
    assert correlation(ch, [1.0, 0.0], psi, 0.0) == pytest.approx(-2 / 3)
    assert abs(correlation(ch, [1.0, 0.0], psi, 30.0)) < 1e-12


def test_forward_equation_validation(two):
    r, ch, g = two
    rk = PerturbedKernel(r, g, 0.1)
    curve = kolmogorov_forward(rk, 0, 1.0, grid=[0.0, 0.5, 1.0])
    np.testing.assert_allclose(curve.probs.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        kolmogorov_forward(rk, 0, 1.0, grid=[2.0])
