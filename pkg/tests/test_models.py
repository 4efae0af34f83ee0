from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from jumpresponse import (BirthDeathModel, ConfiningPotentialModel, Cosine, Field,
                          HeavyTailWarning, LyapunovCertificate, NonPositiveRate,
                          bd_check_conditions, bd_stationary, confining_check, exp_moment_mc,
                          lyapunov_check, stationary)
from jumpresponse.models import (FAILS, HOLDS, INCONCLUSIVE, constant_certificate, random_chain,
                                 sup_abs_contraction, theta_scan, two_state)


# ---------------------------------------------------------------- birth-death
def test_geometric_birth_death_stationary_law():
    model = BirthDeathModel(lambda k: k + 1.0, lambda k: 2.0 * k, K=60)
    st_ = bd_stationary(model)
    assert st_.Z == pytest.approx(2.0, abs=1e-15)
    np.testing.assert_allclose(st_.pi, 0.5 ** np.arange(61) / st_.Z, rtol=1e-12, atol=1e-300)
    # the generic solver cannot resolve weights near 2^-60, so compare it on a shorter chain
    short = model.with_level(30)
    np.testing.assert_allclose(stationary(short.rates), short.pi, rtol=1e-8, atol=1e-15)


@pytest.mark.parametrize("birth, death, verdict, test", [
    (lambda k: k + 1.0, lambda k: 2.0 * k, HOLDS, "ratio"),       # geometric pi
    (1.0, 1.0, FAILS, "raabe"),                                   # symmetric walk
    (2.0, 1.0, FAILS, "ratio"),                                   # transient drift
    (lambda k: k + 1.0, lambda k: k + 2.0, HOLDS, "raabe"),       # pi_k ~ k^-2
    (lambda k: k + 1.0, lambda k: k + 1.0, INCONCLUSIVE, "raabe"),  # pi_k ~ 1/k
])
def test_birth_death_verdicts(birth, death, verdict, test):
    rep = bd_check_conditions(BirthDeathModel(birth, death, K=10))
    assert rep.verdict == verdict
    assert rep.z_series.test == test
    doc = rep.to_dict()
    assert doc["truncated_verdict"] is True
    assert set(doc["Z_series"]["log_partial_sums"]) == {100, 200, 400, 800, 1600}


def test_birth_death_helpers():
    model = BirthDeathModel(lambda k: k + 1.0, lambda k: 2.0 * k, K=5)
    assert model.n == 6 and model.with_level(9).n == 10
    E = model.edge_array(lambda k: 1.0 / (k + 1.0), 0.0)
    assert E[2, 3] == pytest.approx(1 / 3) and E[3, 2] == 0.0 and E[5].sum() == 0.0
    g = model.perturbation(1.0, -1.0, Cosine(1.0))
    assert g.is_decoupled and g.bound == 1.0
    with pytest.raises(NonPositiveRate):
        BirthDeathModel(lambda k: k - 1.0, 1.0, K=5)


# ---------------------------------------------------------------- Lyapunov
def test_constant_certificate_is_tight():
    r = random_chain(5, seed=3)
    alpha = np.random.default_rng(1).normal(size=(5, 5))
    cert = constant_certificate(r, alpha)
    rep = lyapunov_check(r, alpha, cert, nu=0)
    assert rep.passed and rep.violators == []
    assert rep.required_C == pytest.approx(cert.C)
    short = LyapunovCertificate(1.0, 0.9 * cert.C, 1.0, 1.0)
    bad = lyapunov_check(r, alpha, short)
    assert not bad.passed and not bad.drift_ok
    assert bad.worst_state in bad.violators
    assert bad.to_dict()["required_C"] == pytest.approx(cert.C)


def test_certificate_validation():
    with pytest.raises(ValueError):
        LyapunovCertificate(1.0, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        LyapunovCertificate(1.0, 1.0, 0.0, 1.0)


def test_lyapunov_lower_bound():
    r = two_state(1.0, 1.0)
    cert = LyapunovCertificate(np.array([0.5, 2.0]), 10.0, 1.0, 1.0)
    rep = lyapunov_check(r, np.zeros((2, 2)), cert)
    assert not rep.lower_bound_ok and rep.drift_ok and not rep.passed


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_lyapunov_monotone_in_C(seed, C, extra):
    rng = np.random.default_rng(seed)
    r = random_chain(4, seed=seed)
    alpha = rng.normal(size=(4, 4))
    U = rng.uniform(1.0, 3.0, 4)
    lo = lyapunov_check(r, alpha, LyapunovCertificate(U, C, 0.5, 1.0))
    hi = lyapunov_check(r, alpha, LyapunovCertificate(U, C + extra, 0.5, 1.0))
    assert hi.worst_margin >= lo.worst_margin - 1e-12
    if lo.passed:
        assert hi.passed


def test_sup_abs_contraction_time_dependent():
    r = two_state(2.0, 1.0)
    alpha = Field.decoupled(Cosine(1.0, amplitude=0.5), np.array([[0.0, -2.0], [1.0, 0.0]]))
    np.testing.assert_allclose(sup_abs_contraction(alpha, r), [2.0, 0.5])


# ---------------------------------------------------------------- exponential moments
def test_exp_moments_match_feynman_kac():
    r = two_state(2.0, 1.0)
    alpha = np.array([[0.0, 0.5], [-2.0, 0.0]])
    theta, t = 0.4, 1.0
    Q = r.generator()
    V = theta * np.abs(alpha * r.dense()).sum(axis=1)
    integral = (expm(t * (Q + np.diag(V))) @ np.ones(2))[0]
    tilted = r.dense() * np.exp(theta * np.abs(alpha))
    jumps = (expm(t * (tilted - np.diag(r.holding))) @ np.ones(2))[0]
    rep = exp_moment_mc(r, alpha, theta, t, 0, n=20_000, seed=2)
    assert not rep.heavy_tail
    assert rep.integral.agrees_with(integral, k=4.5)
    assert rep.jump_sum.agrees_with(jumps, k=4.5)


def test_exp_moments_of_zero_alpha():
    rep = exp_moment_mc(two_state(2.0, 1.0), np.zeros((2, 2)), 1.0, 1.0, 0, n=200)
    assert rep.integral.value == 1.0 and rep.integral.stderr == 0.0
    assert rep.jump_sum.value == 1.0


def test_heavy_tail_warning():
    r = two_state(1.0, 1.0)
    alpha = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.warns(HeavyTailWarning):
        rep = exp_moment_mc(r, alpha, 4.0, 3.0, 0, n=2000, seed=1)
    assert rep.heavy_tail


def test_theta_scan_reports_largest_clean_theta():
    r = two_state(1.0, 1.0)
    alpha = np.array([[0.0, 1.0], [1.0, 0.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("error", HeavyTailWarning)
        best, rows = theta_scan(r, alpha, [4.0, 0.1, 0.5], 3.0, 0, n=2000, seed=1)
    assert [row["theta"] for row in rows] == [0.1, 0.5, 4.0]
    assert rows[-1]["heavy_tail"] and not rows[-1]["ok"]
    assert best == 0.5


# ---------------------------------------------------------------- confining potential
def _quadratic(x):
    return 0.5 * np.sum(np.asarray(x, float) ** 2, axis=-1)


def test_confining_model_structure():
    model = ConfiningPotentialModel(_quadratic, 2, 3)
    assert model.n == 49
    assert model.rates.irreducible
    np.testing.assert_allclose(stationary(model.rates), model.pi, rtol=1e-8)
    assert model.log_partition() == pytest.approx(math.log(np.exp(-model.V_values).sum()))
    # the corner has only two neighbours inside the box
    corner = model.index([3, 3])
    assert np.count_nonzero(model.rates.dense()[corner]) == 2
    assert model.with_radius(5).n == 121
    with pytest.raises(ValueError):
        ConfiningPotentialModel(_quadratic, 0, 3)


def test_confining_check_plateau_and_growth():
    model = ConfiningPotentialModel(_quadratic, 2, 8)

    def balanced(x, y):
        return np.exp(0.5 * (_quadratic(y) - _quadratic(x)))

    flat = confining_check(model, balanced)
    assert flat.plateau
    np.testing.assert_allclose(flat.running_max, 4.0)
    growing = confining_check(model, lambda x, y: np.ones(len(x)))
    assert not growing.plateau and growing.relative_growth > 1.0
    assert max(abs(c) for c in growing.worst_state) == 8
    assert growing.to_dict()["truncated_verdict"] is True
