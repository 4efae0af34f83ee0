"""Acceptance suite: nine end-to-end checks with fixed tolerances and runtime budgets.

Each criterion returns a :class:`CriterionResult`; :func:`run_all` runs them
in order. The same functions back ``tests/test_acceptance.py`` and the
``validate`` CLI subcommand.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import models
from .core import StationaryChain
from .fields import Field, Perturbation
from .mobility import (build_torus, mobility, mobility_closed_form_two_periodic,
                       mobility_reversible, two_periodic_torus, velocity_fd_exact, velocity_fd_mc)
from .oss import (PeriodicDriving, fd_oss_shift, fourier_response, fourier_response_quadrature,
                  oss_derivative_quadrature, oss_derivative_resolvent, spectrum_check)
from .paths import (JumpSum, TerminalObservable, TimeIntegral, eval_action_ensemble,
                    eval_exp_martingale_ensemble, eval_G_ensemble, eval_quadratic_compensator,
                    eval_functional_ensemble, log1p_field, simulate_ensemble)
from .profiles import Constant, Cosine
from .response_exact import (lr_jump_stationary, lr_observable_stationary,
                             lr_time_integral_stationary)
from .response_mc import covariance_samples


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    runtime: float
    budget: float

    @property
    def within_budget(self):
        return self.runtime <= self.budget

    def line(self):
        status = "PASS" if self.passed and self.within_budget else "FAIL"
        return (f"[{status}] criterion {self.number}: {self.name} "
                f"({self.runtime:.2f}s / {self.budget:.0f}s) {self.detail}")


def _timed(number, name, budget):
    def wrap(fn):
        def run(**kw):
            t0 = time.perf_counter()
            passed, detail = fn(**kw)
            return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0,
                                   budget)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


def _se(x):
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return float(x.std(ddof=1) / math.sqrt(len(x)))


# ----------------------------------------------------------------------------
# benchmarks shared with the tests
# ----------------------------------------------------------------------------
TWO_PERIODIC = (2.0, 1.0, 1.0, 3.0)
OMEGAS = (0.5, 1.0, 10.0)


def two_state_benchmark():
    """Two-state chain a = 2, b = 1 with g = 1 on the single edge 0 -> 1."""
    r = models.two_state(2.0, 1.0)
    E = np.array([[0.0, 1.0], [0.0, 0.0]])
    return r, Perturbation.decoupled(Constant(1.0), E)


def birth_death_benchmark(K=50):
    """Birth-death chain r_k^+ = k + 1, r_k^- = 2k, perturbed on births by cos(s) / (k + 1)."""
    bd = models.BirthDeathModel(lambda k: k + 1.0, lambda k: 2.0 * k, K)
    g = bd.perturbation(lambda k: 1.0 / (k + 1.0), 0.0, Cosine(1.0))
    return bd, g


def confining_potential(x):
    return 0.5 * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


def confining_benchmark(R=4, d=2):
    """V(x) = |x|^2 / 2 with E(x, y) = exp((W(y) - W(x)) / 2), W = V + |x|_1 / 2."""
    model = models.ConfiningPotentialModel(confining_potential, d, R)
    g = model.perturbation(confining_E, Cosine(1.0))
    return model, g


def _W(x):
    return confining_potential(x) + 0.5 * np.sum(np.abs(np.asarray(x, dtype=float)), axis=-1)


def confining_E(x, y):
    return np.exp(0.5 * (_W(y) - _W(x)))


# ----------------------------------------------------------------------------
# criteria
# ----------------------------------------------------------------------------
@_timed(1, "mobility oracle on the two-periodic torus", 1.0)
def criterion_1():
    model = two_periodic_torus(8, *TWO_PERIODIC)
    worst = 0.0
    for w in OMEGAS:
        s = complex(mobility(model, w).sigma[0, 0])
        worst = max(worst, abs(s - mobility_closed_form_two_periodic(*TWO_PERIODIC, w)))
    s1 = complex(mobility(model, 1.0).sigma[0, 0])
    oracle = 12.0 / 7.0 * (1.65 + 0.05j)
    d1 = abs(s1 - oracle)
    return worst <= 1e-10 and d1 <= 1e-10, \
        f"max|resolvent - closed form| = {worst:.1e}, |sigma(1) - oracle| = {d1:.1e}"


@_timed(2, "homogeneous torus mobility is omega-independent", 1.0)
def criterion_2():
    model = build_torus(1, 8, 2.0, 1.0)
    grid = np.concatenate([np.logspace(-2, 2, 9), OMEGAS])
    worst = max(abs(complex(mobility(model, w).sigma[0, 0]) - 3.0) for w in grid)
    return worst <= 1e-10, f"max|sigma - 3| = {worst:.1e} over {len(grid)} frequencies"


@_timed(3, "reversible symmetry and formula equivalence", 5.0)
def criterion_3(seed=0):
    rng = np.random.default_rng(seed)
    xi = 1.0 - rng.random((2, 8, 8))  # i.i.d. uniform on (0, 1]
    model = build_torus(2, 8, conductances=xi)
    asym = equiv = 0.0
    for w in OMEGAS:
        s = mobility(model, w).sigma
        s_rev = mobility_reversible(model, w).sigma
        asym = max(asym, float(np.max(np.abs(s - s.T))))
        equiv = max(equiv, float(np.max(np.abs(s - s_rev))))
    return asym <= 1e-10 and equiv <= 1e-10, \
        f"|sigma - sigma^T| = {asym:.1e}, |general - reversible| = {equiv:.1e}"


def _triangulate(name, exact, cov, fd, bias=1e-5):
    """Pairwise agreement of the covariance, finite-difference and exact values.

    Covariance and finite-difference samples live on the same paths, so their
    difference uses the standard error of the paired per-path differences.
    """
    se_c, se_f = _se(cov), _se(fd)
    se_cf = _se(fd - cov)
    mc, mf = float(np.nanmean(cov)), float(np.nanmean(fd))
    ok = (abs(mc - exact) <= 3 * se_c and abs(mf - exact) <= 3 * se_f + bias
          and abs(mc - mf) <= 3 * se_cf + bias)
    detail = (f"{name}: exact {exact:.6f}, covariance {mc:.6f} +- {se_c:.1e}, "
              f"fd {mf:.6f} +- {se_f:.1e}, paired diff {mc - mf:.1e} +- {se_cf:.1e}")
    return ok, detail


@_timed(4, "three-way linear-response triangulation", 60.0)
def criterion_4(n=100_000, seed=4, lam_step=1e-3, workers=None):
    r, g = two_state_benchmark()
    chain = StationaryChain(r)
    t = 1.0
    v = np.array([1.0, 0.0])
    alpha = Field.static(np.array([[0.0, 1.0], [0.0, 0.0]]))
    ens = simulate_ensemble(r, chain.pi, t, n, seed, workers=workers)
    wp = np.exp(-eval_action_ensemble(ens, g, lam_step, r))
    wm = np.exp(-eval_action_ensemble(ens, g, -lam_step, r))
    dw = (wp - wm) / (2.0 * lam_step)
    cases = [
        ("terminal", TerminalObservable(v), lr_observable_stationary(chain, v, g, t, tol=1e-11)),
        ("time integral", TimeIntegral(v), lr_time_integral_stationary(chain, v, g, t, tol=1e-10)),
        ("jump sum", JumpSum(alpha), lr_jump_stationary(chain, alpha, g, t, tol=1e-10)),
    ]
    oks, details = [], []
    for name, spec, exact in cases:
        cov = covariance_samples(spec, g, r, ens)
        fd = eval_functional_ensemble(ens, spec) * dw
        ok, det = _triangulate(name, exact, cov, fd)
        oks.append(ok)
        details.append(det)
    return all(oks), "; ".join(details)


def martingale_models():
    """The three models of the martingale suite with their perturbations."""
    r2, _ = two_state_benchmark()
    g2 = Perturbation.decoupled(Cosine(2.0), np.array([[0.0, 1.0], [-0.5, 0.0]]))
    r6 = models.random_chain(6, seed=6, density=0.6)
    E6 = np.random.default_rng(60).uniform(-1.0, 1.0, (6, 6)) * (r6.dense() > 0)
    g6 = Perturbation.decoupled(Cosine(1.0, phase=0.3), E6)
    bd, gbd = birth_death_benchmark(50)
    return [("two-state", r2, StationaryChain(r2).pi, g2),
            ("six-state", r6, StationaryChain(r6).pi, g6),
            ("birth-death K=50", bd.rates, bd.pi, gbd)]


def martingale_checks(r, nu, g, t, n, seed, workers=None):
    """All martingale identities on one model; returns (ok, detail)."""
    ens = simulate_ensemble(r, nu, t, n, seed, workers=workers)
    G = eval_G_ensemble(ens, g, r)
    Q = eval_quadratic_compensator(ens, g, r)
    checks = {"E[G]": (float(np.nanmean(G)), _se(G), 0.0)}
    d = G * G - Q
    checks["E[G^2 - <G>]"] = (float(np.nanmean(d)), _se(d), 0.0)
    for target in (0.1, 0.5):
        lam = target / g.bound
        w = np.exp(-eval_action_ensemble(ens, g, lam, r))
        checks[f"E[e^-A] lam|g|={target}"] = (float(np.nanmean(w)) - 1.0, _se(w), 0.0)
    M = eval_exp_martingale_ensemble(ens, log1p_field(g, 1.0), r)
    checks["E[M^F] <= 1"] = (float(np.nanmean(M)) - 1.0, _se(M), None)
    ok, parts = True, []
    for key, (dev, se, _) in checks.items():
        good = dev <= 3 * se if key == "E[M^F] <= 1" else abs(dev) <= 3 * se
        ok &= good
        parts.append(f"{key}: {dev:+.1e} ({dev / se:+.1f} SE)")
    return ok, ", ".join(parts)


@_timed(5, "martingale suite", 120.0)
def criterion_5(n=100_000, seed=5, t=1.0, workers=None):
    oks, details = [], []
    for i, (name, r, nu, g) in enumerate(martingale_models()):
        ok, det = martingale_checks(r, nu, g, t, n, seed + 100 * i, workers)
        oks.append(ok)
        details.append(f"{name} [{det}]")
    return all(oks), "; ".join(details)


@_timed(6, "OSS derivative, monodromy, Fourier responses and spectrum", 10.0)
def criterion_6():
    r = models.two_state(2.0, 1.0)
    chain = StationaryChain(r)
    g = Perturbation.decoupled(Cosine(1.0), np.array([[0.0, 1.0], [0.0, 0.0]]))
    T = 2.0 * math.pi
    driving = PeriodicDriving(chain, g, T)
    grid = np.linspace(0.0, T, 16, endpoint=False)
    dual = max(float(np.max(np.abs(oss_derivative_resolvent(driving, s)
                                   - oss_derivative_quadrature(driving, s)))) for s in grid)
    shift = fd_oss_shift(r, g, T, lam=1e-4, pi=chain.pi)
    target = chain.pi * oss_derivative_resolvent(driving, 0.0)
    rel = float(np.max(np.abs(shift - target)) / np.max(np.abs(target)))
    v = np.array([1.0, 0.0])
    four = max(abs(fourier_response(v, driving, k, check=False)
                   - fourier_response_quadrature(v, driving, k)) for k in (0, 1, -1, 2))
    spec = spectrum_check(chain)
    ok = dual <= 1e-6 and rel <= 1e-3 and four <= 1e-8 and spec["ok"]
    return ok, (f"a_t dual gap {dual:.1e}, monodromy FD rel err {rel:.1e}, "
                f"Fourier gap {four:.1e}, zero eigenvalues {spec['n_zero']}, "
                f"max Re(nonzero) {spec['max_nonzero_real']:.3f}")


@_timed(7, "velocity response cross-check", 120.0)
def criterion_7(n=100_000, seed=7, lam=1e-2, workers=None):
    model = two_periodic_torus(8, *TWO_PERIODIC)
    omega = 1.0
    T = 2.0 * math.pi / omega
    times = [0.0, T / 4.0]
    sigma = complex(mobility(model, omega).sigma[0, 0])
    ests = velocity_fd_mc(model, omega, [1.0], times, lam=lam, n=n, seed=seed, workers=workers)
    oks, parts = [], []
    for t, est in zip(times, ests):
        target = (np.exp(1j * omega * t) * sigma).real
        # O(lam^2) allowance: deterministic central difference at the same lam
        bias = abs(velocity_fd_exact(model, omega, [1.0], t, lam) - target)
        ok = abs(est.value - target) <= 3 * est.stderr + bias
        oks.append(ok)
        parts.append(f"t={t:.3f}: MC {est.value:.4f} +- {est.stderr:.4f} vs {target:.4f} "
                     f"(bias allowance {bias:.1e})")
    return all(oks), "; ".join(parts)


@_timed(8, "condition checkers", 5.0)
def criterion_8():
    geo = models.BirthDeathModel(1.0, 2.0, 200)
    st = models.bd_stationary(geo)
    k = np.arange(41)
    err_pi = float(np.max(np.abs(st.pi[:41] - 2.0 ** -(k + 1.0))))
    err_z = abs(st.Z - 2.0)
    verdict = models.bd_check_conditions(models.BirthDeathModel(2.0, 1.0, 10)).verdict
    bd, g = birth_death_benchmark(50)
    cert = models.constant_certificate(bd.rates, g)
    rep = models.lyapunov_check(bd.rates, g, cert, nu=bd.pi)
    ok = err_pi <= 1e-12 and err_z <= 1e-12 and verdict == models.FAILS and rep.passed
    return ok, (f"|Z - 2| = {err_z:.1e}, max|pi - 2^-(k+1)| = {err_pi:.1e}, "
                f"r+=2 r-=1 verdict {verdict}, constant-U certificate C = {cert.C:.3f} "
                f"{'passes' if rep.passed else 'fails'} (worst margin {rep.worst_margin:.1e})")


EXP_THETA = 0.25


def _exp_moments(r, g, nu, n, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        em = models.exp_moment_mc(r, g, EXP_THETA, 1.0, nu, n=n, seed=seed)
    if em.heavy_tail:
        raise RuntimeError("heavy-tailed exponential moment sample")
    return {"exp moment (integral)": em.integral.value, "exp moment (jumps)": em.jump_sum.value}


def birth_death_outputs(K, n=20_000, seed=9):
    bd, g = birth_death_benchmark(K)
    st = models.bd_stationary(bd)
    chain = bd.chain
    v = np.arange(bd.n, dtype=float)
    out = {"pi[0]": st.pi[0], "pi[1]": st.pi[1], "pi[2]": st.pi[2], "Z": st.Z,
           "LR of E[X_t]": lr_observable_stationary(chain, v, g, 1.0, tol=1e-9)}
    out.update(_exp_moments(bd.rates, g, bd.pi, n, seed))
    return out


def confining_outputs(R, n=20_000, seed=9):
    model, g = confining_benchmark(R)
    centre = model.index(np.zeros(model.d, dtype=np.int64))
    out = {"pi(0)": model.pi[centre], "log Z": model.log_partition(),
           "confining sup": models.confining_check(model, confining_E).running_max[-1]}
    out.update(_exp_moments(model.rates, g, model.pi, n, seed))
    v = (model.coords[:, 0] == 0).astype(float)
    out["LR of P(x_1 = 0)"] = lr_observable_stationary(model.chain, v, g, 1.0, tol=1e-9)
    return out


def _relative_changes(a, b):
    return {k: abs(b[k] - a[k]) / max(abs(a[k]), 1e-300) for k in a}


@_timed(9, "truncation stability", 60.0)
def criterion_9():
    worst, where = 0.0, ""
    for tag, fn, small, big in (("birth-death K", birth_death_outputs, 50, 100),
                                ("confining R", confining_outputs, 4, 8)):
        ch = _relative_changes(fn(small), fn(big))
        key = max(ch, key=ch.get)
        if ch[key] >= worst:
            worst, where = ch[key], f"{tag} {small}->{big}: {key}"
    return worst < 0.01, f"largest relative change {worst:.1e} ({where})"


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9)


def run_all(selected=None, stream=None):
    """Run the suite, printing one line per criterion to ``stream`` if given."""
    results = []
    for i, crit in enumerate(CRITERIA, start=1):
        if selected and i not in selected:
            continue
        res = crit()
        results.append(res)
        if stream is not None:
            print(res.line(), file=stream, flush=True)
    return results
