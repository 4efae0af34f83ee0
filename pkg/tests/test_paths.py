from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from jumpresponse import (Cosine, Ensemble, Field, JumpSum, PerturbedKernel, RngStream,
                          TerminalObservable, TimeIntegral, Trajectory, TruncatedPath, eval_action,
                          eval_exp_martingale, eval_functional, eval_G, kolmogorov_forward,
                          simulate_ensemble, simulate_homogeneous)
from jumpresponse.models import random_chain, two_state
from jumpresponse.paths import (_split_at_zeros, eval_action_ensemble, eval_functional_ensemble,
                                eval_G_ensemble, log1p_field)

G01 = np.array([[0.0, 1.0], [0.0, 0.0]])


@pytest.fixture
def hand_path():
    return Trajectory(1.0, 0, [0.3, 0.7], [1, 0])


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(1.0, 0, [0.5, 0.4], [1, 0])
    with pytest.raises(ValueError):
        Trajectory(1.0, 0, [0.5], [0])
    with pytest.raises(ValueError):
        Trajectory(1.0, 0, [1.5], [1])
    with pytest.raises(ValueError):
        Trajectory(1.0, 0, [0.5], [1, 0])


def test_hand_path_functionals(hand_path):
    r = two_state(2.0, 1.0)
    assert hand_path.state_at(0.5) == 1 and hand_path.final_state == 0
    assert eval_functional(hand_path, TerminalObservable([1.0, 0.0])) == 1.0
    assert eval_functional(hand_path, TimeIntegral([1.0, 2.0])) == pytest.approx(1.4)
    alpha = np.array([[0.0, 0.25], [-1.0, 0.0]])
    assert eval_functional(hand_path, JumpSum(alpha)) == pytest.approx(-0.75)
    g = Field.static(G01)
    # one jump along (0, 1); the compensator accrues at rate 2 while in state 0 (0.6 time units)
    assert eval_G(hand_path, g, r) == pytest.approx(1.0 - 1.2)
    lam = 0.3
    assert eval_action(hand_path, g, lam, r) == pytest.approx(2 * math.expm1(lam) * 0.6 - lam)
    assert eval_exp_martingale(hand_path, g, r) == pytest.approx(
        math.exp(1.0 - 2 * math.expm1(1.0) * 0.6))


def test_hand_path_time_dependent(hand_path):
    r = two_state(2.0, 1.0)
    g = Field.decoupled(Cosine(1.0), G01)
    v = Field.decoupled(Cosine(1.0), np.array([1.0, 0.0]))
    assert eval_functional(hand_path, TimeIntegral(v)) == pytest.approx(
        math.sin(0.3) + math.sin(1.0) - math.sin(0.7))
    assert eval_G(hand_path, g, r) == pytest.approx(
        math.cos(0.3) - 2 * (math.sin(0.3) + math.sin(1.0) - math.sin(0.7)))


def test_pointwise_log1p_matches_generic_callable():
    r = random_chain(4, seed=2)
    E = np.random.default_rng(0).uniform(-1, 1, (4, 4))
    alpha = Field.decoupled(Cosine(1.5, phase=0.2), E)
    fast = log1p_field(alpha, 0.7)
    assert fast.pointwise is not None
    slow = Field(func=lambda s: np.log1p(0.7 * np.abs(alpha.at(s))), bound=fast.bound)
    ens = simulate_ensemble(r, 0, 3.0, 40, seed=3)
    np.testing.assert_allclose(eval_action_ensemble(ens, fast, 1.0, r),
                               eval_action_ensemble(ens, slow, 1.0, r), rtol=1e-9, atol=1e-11)
    np.testing.assert_allclose(eval_functional_ensemble(ens, JumpSum(fast)),
                               eval_functional_ensemble(ens, JumpSum(slow)), atol=1e-14)


def test_split_at_zeros_covers_segments():
    p = Cosine(2.0, phase=0.4)
    start = np.array([0.0, 1.0, 2.5])
    end = np.array([0.9, 1.0001, 6.0])
    owner, lo, hi = _split_at_zeros(start, end, p)
    total = np.bincount(owner, hi - lo, len(start))
    np.testing.assert_allclose(total, end - start, atol=1e-14)
    assert np.all(hi >= lo)
    inner = lo[1:][owner[1:] == owner[:-1]]
    np.testing.assert_allclose(np.abs(p(inner)), 0.0, atol=1e-12)


def test_same_seed_same_paths_and_worker_independence():
    r = random_chain(5, seed=1, density=0.6)
    a = simulate_ensemble(r, 0, 2.0, 60, seed=11, workers=1)
    b = simulate_ensemble(r, 0, 2.0, 60, seed=11, workers=1)
    c = simulate_ensemble(r, 0, 2.0, 60, seed=11, workers=3)
    for other in (b, c):
        np.testing.assert_array_equal(a.jump_times, other.jump_times)
        np.testing.assert_array_equal(a.jump_states, other.jump_states)
        np.testing.assert_array_equal(a.x0, other.x0)
    d = simulate_ensemble(r, 0, 2.0, 60, seed=12)
    assert not np.array_equal(a.jump_times, d.jump_times)


def test_streams_are_addressable():
    r = random_chain(5, seed=1)
    ens = simulate_ensemble(r, [0.2, 0.2, 0.2, 0.2, 0.2], 1.5, 10, seed=4)
    tail = simulate_ensemble(r, [0.2, 0.2, 0.2, 0.2, 0.2], 1.5, 5, seed=4, first_stream=5)
    single = simulate_homogeneous(r, [0.2, 0.2, 0.2, 0.2, 0.2], 1.5, rng=RngStream(4, 7))
    np.testing.assert_array_equal(ens[7].times, tail[2].times)
    np.testing.assert_array_equal(ens[7].times, single.times)
    np.testing.assert_array_equal(ens[7].states, single.states)
    assert ens[7].stream == 7


def test_restrict_matches_shorter_horizon():
    r = random_chain(4, seed=5)
    long = simulate_ensemble(r, 1, 2.0, 50, seed=8)
    short = simulate_ensemble(r, 1, 0.8, 50, seed=8)
    cut = long.restrict(0.8)
    np.testing.assert_array_equal(cut.jump_times, short.jump_times)
    np.testing.assert_array_equal(cut.offsets, short.offsets)
    spec = TimeIntegral(np.arange(4.0))
    np.testing.assert_allclose(eval_functional_ensemble(cut, spec),
                               eval_functional_ensemble(short, spec))
    with pytest.raises(ValueError):
        long.restrict(3.0)


def test_from_trajectories_round_trip():
    r = two_state(2.0, 1.0)
    ens = simulate_ensemble(r, 0, 1.0, 8, seed=1)
    back = Ensemble.from_trajectories([ens[p] for p in range(len(ens))])
    np.testing.assert_array_equal(back.offsets, ens.offsets)
    np.testing.assert_array_equal(back.final_state, ens.final_state)


def test_truncation_flags_and_nan():
    r = two_state(50.0, 50.0)
    ens = simulate_ensemble(r, 0, 1.0, 20, seed=0, cap=5)
    assert ens.truncated.all()
    assert np.all(ens.n_jumps == 5)
    assert np.isnan(eval_functional_ensemble(ens, TimeIntegral([1.0, 0.0]))).all()
    with pytest.raises(TruncatedPath):
        ens.check_untruncated()
    with pytest.raises(TruncatedPath):
        eval_functional(ens[0], TerminalObservable([1.0, 0.0]))


def test_dump_jsonl(tmp_path):
    ens = simulate_ensemble(two_state(2.0, 1.0), 0, 1.0, 3, seed=2)
    out = tmp_path / "paths.jsonl"
    ens.dump_jsonl(out, values={"F": np.arange(3.0)})
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert [rec["stream"] for rec in recs] == [0, 1, 2]
    assert recs[2]["values"]["F"] == 2.0
    assert recs[1]["times"] == ens[1].times.tolist()


def test_input_validation():
    r = two_state(2.0, 1.0)
    with pytest.raises(ValueError):
        simulate_ensemble(r, 0, -1.0, 5, seed=0)
    with pytest.raises(ValueError):
        simulate_ensemble(r, [0.5, -0.5], 1.0, 5, seed=0)
    with pytest.raises(ValueError):
        simulate_ensemble(r, 0, 1.0, 5, seed=0, cap=0)


def test_gillespie_marginal_matches_expm():
    r = random_chain(4, seed=9, density=0.5)
    nu = np.array([1.0, 0.0, 0.0, 0.0])
    n = 20_000
    ens = simulate_ensemble(r, nu, 0.7, n, seed=21)
    freq = np.bincount(ens.final_state, minlength=4) / n
    exact = nu @ expm(0.7 * r.generator())
    se = np.sqrt(exact * (1 - exact) / n)
    assert np.all(np.abs(freq - exact) < 4.5 * se + 1e-12)


def test_thinning_marginal_matches_forward_equation():
    r = two_state(2.0, 1.0)
    g = Field.decoupled(Cosine(3.0), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    rk = PerturbedKernel(r, g, 0.5)
    n = 20_000
    ens = simulate_ensemble(rk, 0, 1.3, n, seed=5)
    p0 = float(np.mean(ens.final_state == 0))
    exact = kolmogorov_forward(rk, [1.0, 0.0], 1.3).at(-1)[0]
    assert abs(p0 - exact) < 4.5 * math.sqrt(exact * (1 - exact) / n)


def test_G_is_centred():
    r = random_chain(4, seed=4)
    g = Field.decoupled(Cosine(2.0), np.random.default_rng(1).normal(size=(4, 4)))
    ens = simulate_ensemble(r, 0, 1.0, 20_000, seed=6)
    G = eval_G_ensemble(ens, g, r)
    assert abs(G.mean()) < 4.5 * G.std() / math.sqrt(len(G))
