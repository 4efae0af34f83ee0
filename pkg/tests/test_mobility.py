from __future__ import annotations

import math

import numpy as np
import pytest

from jumpresponse import (NonPositiveRate, build_torus, mobility, mobility_closed_form_two_periodic,
                          mobility_quadrature, mobility_reversible, two_periodic_torus,
                          velocity_response)
from jumpresponse.mobility import TorusModel, velocity_fd_exact, velocity_fd_mc

RATES = (2.0, 1.0, 1.0, 3.0)


def test_closed_form_value():
    assert mobility_closed_form_two_periodic(*RATES, 1.0) == pytest.approx(
        12 / 7 * (1.65 + 0.05j), abs=1e-14)


@pytest.mark.parametrize("omega", [0.5, 1.0, 10.0])
@pytest.mark.parametrize("N", [4, 8, 16])
def test_two_periodic_matches_closed_form(N, omega):
    model = two_periodic_torus(N, *RATES)
    assert mobility(model, omega)[0, 0] == pytest.approx(
        mobility_closed_form_two_periodic(*RATES, omega), abs=1e-10)


def test_quadrature_route_agrees():
    model = two_periodic_torus(8, *RATES)
    for omega in (0.5, 10.0):
        np.testing.assert_allclose(mobility_quadrature(model, omega).sigma,
                                   mobility(model, omega).sigma, atol=1e-8)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_homogeneous_walk_is_frequency_independent(d):
    plus = [2.0, 0.5, 1.5][:d]
    minus = [1.0, 0.5, 3.0][:d]
    model = build_torus(d, 3, plus=plus, minus=minus)
    np.testing.assert_allclose(model.Psi, 0.0, atol=1e-13)
    for omega in (0.3, 4.0):
        np.testing.assert_allclose(mobility(model, omega).sigma,
                                   np.diag(np.add(plus, minus)), atol=1e-12)


def test_conductance_walk_reversible_form():
    rng = np.random.default_rng(0)
    model = build_torus(2, 4, conductances=rng.uniform(0.5, 2.0, (2, 4, 4)))
    np.testing.assert_allclose(model.pi, 1 / 16)
    for omega in (0.0, 1.0):
        a = mobility(model, omega).sigma
        b = mobility_reversible(model, omega).sigma
        np.testing.assert_allclose(a, b, atol=1e-11)
        np.testing.assert_allclose(a, a.T, atol=1e-11)
    assert mobility(model, 0.0).restricted
    # the static mobility of a reversible walk is positive definite
    assert np.all(np.linalg.eigvalsh(mobility(model, 0.0).sigma.real) > 0)


def test_velocity_response_matches_deterministic_fd():
    model = two_periodic_torus(4, *RATES)
    for t in (0.0, 1.0):
        lr = velocity_response(model, 1.0, [1.0], t)[0]
        fd = velocity_fd_exact(model, 1.0, [1.0], t, 1e-3)
        assert lr == pytest.approx(fd, abs=1e-5)


def test_velocity_fd_mc_small_sample():
    model = two_periodic_torus(4, *RATES)
    est = velocity_fd_mc(model, 1.0, [1.0], [0.0, 1.0], lam=1e-2, n=20_000, seed=3)
    for e, t in zip(est, (0.0, 1.0)):
        exact = velocity_fd_exact(model, 1.0, [1.0], t, 1e-2)
        assert e.agrees_with(exact, k=4.5)


def test_validation():
    with pytest.raises(NonPositiveRate):
        two_periodic_torus(4, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        two_periodic_torus(5, *RATES)
    with pytest.raises(ValueError):
        TorusModel(np.ones((1, 4)), np.ones((1, 3)))
    with pytest.raises(ValueError):
        two_periodic_torus(2, *RATES).field_E([1.0])
    with pytest.raises(ValueError):
        velocity_response(two_periodic_torus(4, *RATES), 1.0, [2.0], 0.0)
    with pytest.raises(ValueError):
        build_torus(1, 4)
    with pytest.raises(NonPositiveRate):
        mobility_closed_form_two_periodic(1.0, 1.0, -1.0, 1.0, 1.0)


def test_two_site_torus_sums_duplicate_edges():
    model = two_periodic_torus(2, *RATES)
    R = model.rates.dense()
    assert R[0, 1] == pytest.approx(RATES[0] + RATES[1])
    assert math.isfinite(mobility(model, 1.0)[0, 0].real)
