"""Monte-Carlo linear-response estimators.

All estimators are sample means of per-path quantities on an ensemble of
unperturbed paths:

* covariance: ``F * G_t`` (terminal) or ``int v(s, X_s) G_s ds`` (time integral);
* res3: ``int (alpha g)_r ds + int alpha_r G_s ds`` for jump sums;
* Girsanov: ``F * exp(-A_lam)``;
* finite differences: ``F * (exp(-A_{+lam}) - exp(-A_{-lam})) / (2 lam)`` on common paths.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import PerturbedKernel, RateMatrix
from .errors import TruncatedPathsExceeded, WeightDegeneracy
from .fields import Field, Perturbation
from .paths import (DEFAULT_CAP, Ensemble, FunctionalSpec, JumpSum, TerminalObservable,
                    TimeIntegral, eval_action_ensemble, eval_functional_ensemble,
                    eval_G_ensemble, eval_time_integral_G, segment_integrals, simulate_ensemble)

MAX_TRUNCATED_FRACTION = 1e-3
MIN_ESS_FRACTION = 0.01


@dataclass(frozen=True)
class ResponseEstimate:
    value: float
    stderr: float
    n: int
    seed: int | None
    estimator: str
    truncated: int = 0
    ess: float | None = None

    def to_json(self, **extra):
        doc = asdict(self)
        doc.update(extra)
        return json.dumps(doc, sort_keys=True)

    def agrees_with(self, other, k=3.0, slack=0.0):
        """|difference| <= k * combined SE + slack (``other`` may be a float)."""
        if isinstance(other, ResponseEstimate):
            se = math.hypot(self.stderr, other.stderr)
            return abs(self.value - other.value) <= k * se + slack
        return abs(self.value - float(other)) <= k * self.stderr + slack


def _paths(r, nu, t, n, seed, paths, cap, workers):
    if paths is None:
        paths = simulate_ensemble(r, nu, t, n, seed, cap=cap, workers=workers)
    frac = float(np.mean(paths.truncated)) if len(paths) else 0.0
    if frac > MAX_TRUNCATED_FRACTION:
        raise TruncatedPathsExceeded(f"{frac:.2%} of paths hit the jump cap")
    return paths


def _summarize(samples, ens: Ensemble, tag, ess=None):
    keep = ~ens.truncated
    x = np.asarray(samples, dtype=float)[keep]
    m = len(x)
    value = float(np.mean(x)) if m else float("nan")
    se = float(np.std(x, ddof=1) / math.sqrt(m)) if m > 1 else float("nan")
    return ResponseEstimate(value, se, m, ens.seed, tag, int(ens.truncated.sum()), ess)


def _field(f):
    return f if isinstance(f, Field) else Field.static(np.asarray(f, dtype=float))


def covariance_samples(spec: FunctionalSpec, g: Field, r: RateMatrix, ens: Ensemble):
    """Per-path samples whose mean is the lam-derivative of E[F]."""
    if isinstance(spec, TerminalObservable):
        F = eval_functional_ensemble(ens, spec)
        return F * eval_G_ensemble(ens, g, r)
    if isinstance(spec, TimeIntegral):
        return eval_time_integral_G(ens, spec.field, g, r)
    if isinstance(spec, JumpSum):
        return res3_samples(spec.field, g, r, ens)
    raise TypeError(f"unknown functional {spec!r}")


def res3_samples(alpha: Field, g: Field, r: RateMatrix, ens: Ensemble):
    alpha = _field(alpha)
    direct = ens.path_sum(segment_integrals(ens, (alpha * g).contract(r)))
    coupling = eval_time_integral_G(ens, alpha.contract(r), g, r)
    return direct + coupling


def lr_covariance(spec: FunctionalSpec, g: Field, r: RateMatrix, nu, t, n=100_000, seed=0,
                  paths=None, cap=DEFAULT_CAP, workers=None) -> ResponseEstimate:
    """Covariance (martingale) estimator of the response of E[F].

    Jump-sum functionals are forwarded to :func:`lr_res3`.
    """
    ens = _paths(r, nu, t, n, seed, paths, cap, workers)
    if isinstance(spec, JumpSum):
        return _summarize(res3_samples(spec.field, g, r, ens), ens, "res3")
    return _summarize(covariance_samples(spec, g, r, ens), ens, "covariance")


def lr_res3(alpha, g: Field, r: RateMatrix, nu, t, n=100_000, seed=0, paths=None,
            cap=DEFAULT_CAP, workers=None) -> ResponseEstimate:
    """Response of a jump sum: direct (alpha g)_r term plus the alpha_r G_s coupling."""
    ens = _paths(r, nu, t, n, seed, paths, cap, workers)
    return _summarize(res3_samples(alpha, g, r, ens), ens, "res3")


def _weights(g, lam, r, ens):
    logw = -eval_action_ensemble(ens, g, lam, r)
    keep = ~ens.truncated
    lk = logw[keep]
    if len(lk) and np.all(np.isfinite(lk)):
        # ESS from shifted log-weights so it stays finite when the weights overflow
        u = np.exp(lk - lk.max())
        ess = float(u.sum() ** 2 / np.sum(u * u))
    else:
        ess = 0.0
    if ess < MIN_ESS_FRACTION * len(lk):
        raise WeightDegeneracy(f"effective sample size {ess:.1f} of {len(lk)}")
    return np.exp(logw), ess


def girsanov_expectation(spec: FunctionalSpec | None, g: Field, lam, r: RateMatrix, nu, t,
                         n=100_000, seed=0, paths=None, cap=DEFAULT_CAP, workers=None,
                         check_bound=True) -> ResponseEstimate:
    """Perturbed expectation E[F(X^lam)] by reweighting unperturbed paths.

    ``spec=None`` stands for F = 1 (the total mass of the weights).
    """
    if check_bound and lam * g.bound > 0.5 + 1e-12:
        raise ValueError(f"lam * ||g|| = {lam * g.bound:.3g} exceeds 1/2")
    ens = _paths(r, nu, t, n, seed, paths, cap, workers)
    w, ess = _weights(g, lam, r, ens)
    F = 1.0 if spec is None else eval_functional_ensemble(ens, spec)
    return _summarize(F * w, ens, "girsanov", ess)


def fd_derivative(spec: FunctionalSpec, g: Field, r: RateMatrix, nu, t, lam_step=None,
                  n=100_000, seed=0, paths=None, cap=DEFAULT_CAP, workers=None) -> ResponseEstimate:
    """Central difference of Girsanov expectations at +-lam_step on common paths."""
    bound = g.bound
    if lam_step is None:
        lam_step = 1e-3 / bound if bound > 0 else 1e-3
    if lam_step * bound > 0.25 + 1e-12:
        raise ValueError(f"lam_step * ||g|| = {lam_step * bound:.3g} exceeds 1/4")
    ens = _paths(r, nu, t, n, seed, paths, cap, workers)
    wp, ess_p = _weights(g, lam_step, r, ens)
    wm, ess_m = _weights(g, -lam_step, r, ens)
    F = eval_functional_ensemble(ens, spec)
    return _summarize(F * (wp - wm) / (2.0 * lam_step), ens, "girsanov-fd", min(ess_p, ess_m))


def direct_fd(spec: FunctionalSpec, g: Field, r: RateMatrix, nu, t, lam_step, n=100_000, seed=0,
              cap=DEFAULT_CAP, workers=None) -> ResponseEstimate:
    """Central difference of two perturbed simulations driven by the same streams."""
    ep = simulate_ensemble(PerturbedKernel(r, g, lam_step), nu, t, n, seed, cap=cap, workers=workers)
    em = simulate_ensemble(PerturbedKernel(r, _negated(g), lam_step), nu, t, n, seed, cap=cap,
                           workers=workers)
    fp = eval_functional_ensemble(ep, spec)
    fm = eval_functional_ensemble(em, spec)
    keep = ~(ep.truncated | em.truncated)
    diff = (fp - fm)[keep] / (2.0 * lam_step)
    m = len(diff)
    return ResponseEstimate(float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(m)), m,
                            int(seed), "direct-fd", int((~keep).sum()))


def _negated(g):
    neg = -g
    out = Perturbation.from_field(neg)
    if g.func is not None:
        out._declared_bound = g.bound
    return out
