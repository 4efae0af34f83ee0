"""Model zoo and diagnostic checkers for exponential-moment conditions.

Every infinite-state model is handled through a reflecting truncation, and
every checker reports numerical evidence on truncated ranges. Verdicts are
labelled as empirical: none of them is a proof about the infinite model.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import DENSE_MAX, RateMatrix, StationaryChain
from .errors import HeavyTailWarning, NonPositiveRate
from .fields import Field, Perturbation
from .paths import DEFAULT_CAP, jump_values, segment_integrals, simulate_ensemble
from .profiles import Constant, TimeProfile
from .response_mc import ResponseEstimate

HOLDS = "holds-empirically"
FAILS = "fails-empirically"
INCONCLUSIVE = "inconclusive"


def _rate_fn(r):
    """Turn a scalar or a callable of the level k into a vectorized callable."""
    if callable(r):
        return lambda k: np.asarray(r(np.asarray(k)), dtype=float) * np.ones(np.shape(k))
    value = float(r)
    return lambda k: np.full(np.shape(k), value)


def _rates_matrix(rows, cols, vals, n):
    R = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return RateMatrix(R.toarray() if n <= DENSE_MAX else R)


# ----------------------------------------------------------------------------
# small finite chains
# ----------------------------------------------------------------------------
def two_state(a, b) -> RateMatrix:
    """Two-state chain with r(0, 1) = a and r(1, 0) = b."""
    return RateMatrix(np.array([[0.0, a], [b, 0.0]]))


def random_chain(n, seed=0, density=1.0, low=0.5, high=2.0) -> RateMatrix:
    """Irreducible chain with rates uniform on [low, high] on a random edge set.

    A directed cycle through all states is always kept, so the chain is
    irreducible for any density.
    """
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < density
    cycle = np.arange(n)
    mask[cycle, np.roll(cycle, -1)] = True
    np.fill_diagonal(mask, False)
    R = np.where(mask, rng.uniform(low, high, (n, n)), 0.0)
    return RateMatrix(R)


# ----------------------------------------------------------------------------
# birth-death processes
# ----------------------------------------------------------------------------
class BirthDeathModel:
    """Birth-death chain on {0, ..., K} with reflection at K.

    Parameters
    ----------
    birth : float or callable
        ``birth(k)`` is the rate k -> k + 1 (k >= 0).
    death : float or callable
        ``death(k)`` is the rate k -> k - 1 (k >= 1).
    K : int
        Truncation level; the jump K -> K + 1 is suppressed.
    """

    def __init__(self, birth, death, K):
        if int(K) < 1:
            raise ValueError("truncation level K must be at least 1")
        self.K = int(K)
        self._birth = _rate_fn(birth)
        self._death = _rate_fn(death)
        self._birth_spec, self._death_spec = birth, death
        k = np.arange(self.K + 1)
        if np.any(self.birth(k[:-1]) <= 0) or np.any(self.death(k[1:]) <= 0):
            raise NonPositiveRate("birth and death rates must be positive on [0, K]")

    def birth(self, k):
        return self._birth(k)

    def death(self, k):
        return self._death(k)

    def with_level(self, K):
        return BirthDeathModel(self._birth_spec, self._death_spec, K)

    @property
    def n(self):
        return self.K + 1

    @property
    def rates(self) -> RateMatrix:
        if "_rates" not in self.__dict__:
            k = np.arange(self.K)
            rows = np.concatenate([k, k + 1])
            cols = np.concatenate([k + 1, k])
            vals = np.concatenate([self.birth(k), self.death(k + 1)])
            self._rates = _rates_matrix(rows, cols, vals, self.n)
        return self._rates

    @property
    def pi(self):
        return bd_stationary(self).pi

    @property
    def chain(self) -> StationaryChain:
        if "_chain" not in self.__dict__:
            self._chain = StationaryChain(self.rates, self.pi)
        return self._chain

    def edge_array(self, up, down):
        """Pair array with ``up[k]`` on k -> k + 1 and ``down[k]`` on k -> k - 1.

        ``up`` and ``down`` may be scalars, callables of k, or arrays of
        length K + 1 (``down[0]`` is ignored).
        """
        k = np.arange(self.n)
        u = _rate_fn(up)(k) if callable(up) or np.ndim(up) == 0 else np.asarray(up, float)
        d = _rate_fn(down)(k) if callable(down) or np.ndim(down) == 0 else np.asarray(down, float)
        E = np.zeros((self.n, self.n))
        E[k[:-1], k[:-1] + 1] = u[:-1]
        E[k[1:], k[1:] - 1] = d[1:]
        return E

    def perturbation(self, up, down, profile: TimeProfile | None = None) -> Perturbation:
        """Decoupled perturbation g(s, k, k +- 1) = tau(s) E_k^{+-}."""
        return Perturbation.decoupled(profile or Constant(1.0), self.edge_array(up, down))

    def __repr__(self):
        return f"BirthDeathModel(K={self.K})"


@dataclass(frozen=True)
class BDStationary:
    """Partial sums of both series and the truncated stationary law.

    ``z_partial[k]`` is 1 + the first k terms of Z; ``explosion_partial[k]``
    is the sum of the first k + 1 terms of the non-explosion series.
    """

    z_partial: np.ndarray
    explosion_partial: np.ndarray
    log_weights: np.ndarray
    pi: np.ndarray

    @property
    def Z(self):
        return float(self.z_partial[-1])


def _log_terms(model: BirthDeathModel, K):
    k = np.arange(1, K + 1)
    lb = np.log(model.birth(k - 1))
    ld = np.log(model.death(k))
    log_w = np.concatenate([[0.0], np.cumsum(lb - ld)])
    log_u = np.concatenate([[0.0], np.cumsum(ld - np.log(model.birth(k)))])
    return log_w, log_u


def bd_stationary(model: BirthDeathModel) -> BDStationary:
    """Stationary law of the truncated chain with both diagnostic series."""
    log_w, log_u = _log_terms(model, model.K)
    log_z = np.logaddexp.accumulate(log_w)
    with np.errstate(over="ignore"):
        z_partial = np.exp(log_z)
        explosion = np.exp(np.logaddexp.accumulate(log_u))
    pi = np.exp(log_w - log_z[-1])
    return BDStationary(z_partial, explosion, log_w, pi / pi.sum())


@dataclass(frozen=True)
class SeriesEvidence:
    """Tail behaviour of a positive series from its log-terms."""

    verdict: str  # "converges", "diverges" or "inconclusive"
    test: str
    ratio: float
    raabe: float
    log_partial_sums: dict

    def to_dict(self):
        return {"verdict": self.verdict, "test": self.test, "ratio": self.ratio,
                "raabe": self.raabe, "log_partial_sums": self.log_partial_sums}


def _series_evidence(log_terms, K_sequence, ratio_margin=0.01, raabe_margin=0.05):
    K = len(log_terms) - 1
    log_ratio = float(np.mean(np.diff(log_terms)[-max(1, K // 8):]))
    ratio = math.exp(log_ratio)
    # Raabe number k (a_k / a_{k+1} - 1) at the largest available index
    raabe = float(K * math.expm1(-(log_terms[-1] - log_terms[-2])))
    if ratio < 1.0 - ratio_margin:
        verdict, test = "converges", "ratio"
    elif ratio > 1.0 + ratio_margin:
        verdict, test = "diverges", "ratio"
    elif raabe > 1.0 + raabe_margin:
        verdict, test = "converges", "raabe"
    elif raabe < 1.0 - raabe_margin:
        verdict, test = "diverges", "raabe"
    else:
        verdict, test = "inconclusive", "raabe"
    partial = np.logaddexp.accumulate(log_terms)
    sums = {int(k): float(partial[k]) for k in K_sequence if k <= K}
    return SeriesEvidence(verdict, test, ratio, raabe, sums)


@dataclass(frozen=True)
class BDConditionReport:
    verdict: str
    z_series: SeriesEvidence
    explosion_series: SeriesEvidence
    K_sequence: tuple

    def to_dict(self):
        return {"verdict": self.verdict, "truncated_verdict": True,
                "K_sequence": list(self.K_sequence),
                "Z_series": self.z_series.to_dict(),
                "explosion_series": self.explosion_series.to_dict()}


def bd_check_conditions(model: BirthDeathModel, K_sequence=(100, 200, 400, 800, 1600)):
    """Empirical verdict on summability of Z and divergence of the second series.

    The tail ratio of consecutive terms decides when it stays away from 1;
    otherwise the Raabe number decides when it stays away from 1; otherwise
    the verdict is inconclusive.
    """
    K_sequence = tuple(sorted(int(k) for k in K_sequence))
    log_w, log_u = _log_terms(model, K_sequence[-1])
    z = _series_evidence(log_w, K_sequence)
    ex = _series_evidence(log_u, K_sequence)
    if z.verdict == "diverges" or ex.verdict == "converges":
        verdict = FAILS
    elif z.verdict == "converges" and ex.verdict == "diverges":
        verdict = HOLDS
    else:
        verdict = INCONCLUSIVE
    return BDConditionReport(verdict, z, ex, K_sequence)


# ----------------------------------------------------------------------------
# Lyapunov certificates
# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class LyapunovCertificate:
    """Candidate U with constants C >= 0, sigma > 0, c > 0.

    ``U`` is an array over states or a callable of the state index array.
    """

    U: object
    C: float
    sigma: float
    c: float

    def __post_init__(self):
        if self.C < 0 or self.sigma <= 0 or self.c <= 0:
            raise ValueError("need C >= 0, sigma > 0 and c > 0")

    def values(self, n):
        U = self.U(np.arange(n)) if callable(self.U) else self.U
        U = np.asarray(U, dtype=float)
        return np.full(n, float(U)) if U.ndim == 0 else U


@dataclass(frozen=True)
class LyapunovReport:
    passed: bool
    lower_bound_ok: bool
    finite_neighbour_sum: bool
    drift_ok: bool
    initial_moment: float
    worst_margin: float
    worst_state: int
    violators: list
    required_C: float

    def to_dict(self):
        return {"passed": self.passed, "truncated_verdict": True,
                "U_at_least_c": self.lower_bound_ok,
                "U_r_finite": self.finite_neighbour_sum, "drift_inequality": self.drift_ok,
                "nu_U": self.initial_moment, "worst_margin": self.worst_margin,
                "worst_state": self.worst_state, "violators": self.violators,
                "required_C": self.required_C}


def sup_abs_contraction(alpha, r: RateMatrix, times=None):
    """max over a time grid of |alpha|_r(s, x), per state."""
    alpha = alpha if isinstance(alpha, Field) else Field.static(np.asarray(alpha, dtype=float))
    ar = alpha.absolute().contract(r)
    if ar.is_static:
        return np.asarray(ar.static_value, dtype=float)
    if alpha.func is None:
        # decoupled terms: sup |tau| per term bounds the time dependence exactly for one term
        out = np.zeros(r.n)
        for p, F in alpha.terms:
            out += p.bound * (np.abs(F) * r.dense()).sum(axis=1)
        return out
    grid = np.linspace(0.0, alpha.period or 1.0, 257) if times is None else np.asarray(times)
    return np.max([ar.at(s) for s in grid], axis=0)


def lyapunov_check(r: RateMatrix, alpha, cert: LyapunovCertificate, nu=None, times=None,
                   tol=1e-12) -> LyapunovReport:
    """Pointwise check of the reinforced Lyapunov inequality on a finite model.

    Verifies ``U >= c``, finiteness of ``U_r``, and
    ``LU <= C U - sigma |alpha|_r U`` at every state, with ``|alpha|_r`` taken
    at its supremum over time. Reports the worst margin, the violating
    states, and the smallest C for which the drift inequality would hold.
    """
    n = r.n
    U = cert.values(n)
    ar = sup_abs_contraction(alpha, r, times)
    R = r.matrix
    Ur = np.asarray(R @ U).ravel()
    LU = Ur - r.holding * U
    margin = cert.C * U - cert.sigma * ar * U - LU
    scale = np.maximum(1.0, np.abs(cert.C * U))
    bad = np.flatnonzero(margin < -tol * scale)
    worst = int(np.argmin(margin))
    if nu is None:
        nu_U = float(np.max(U))
    elif isinstance(nu, (int, np.integer)):
        nu_U = float(U[int(nu)])
    else:
        nu_U = float(np.dot(nu, U))
    lower = bool(np.all(U >= cert.c))
    finite = bool(np.all(np.isfinite(Ur)))
    drift = len(bad) == 0
    required = float(np.max((LU + cert.sigma * ar * U) / U))
    return LyapunovReport(lower and finite and drift and math.isfinite(nu_U), lower, finite, drift,
                          nu_U, float(margin[worst]), worst, bad.tolist(), max(required, 0.0))


def constant_certificate(r: RateMatrix, alpha, sigma=1.0, U=1.0, times=None):
    """Certificate U = const with the smallest admissible C = sigma sup |alpha|_r."""
    ar = sup_abs_contraction(alpha, r, times)
    return LyapunovCertificate(float(U), float(sigma * np.max(ar)), float(sigma), float(U))


# ----------------------------------------------------------------------------
# exponential moments
# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class ExpMomentReport:
    integral: ResponseEstimate
    jump_sum: ResponseEstimate
    heavy_tail: bool


def _top_share(samples, frac=0.01):
    x = np.sort(samples)
    k = max(1, int(math.ceil(frac * len(x))))
    total = x.sum()
    return float(x[-k:].sum() / total) if total > 0 else 0.0


def exp_moment_mc(r: RateMatrix, alpha, theta, t, nu, n=10_000, seed=0, paths=None,
                  cap=DEFAULT_CAP, workers=None) -> ExpMomentReport:
    """MC estimates of E_nu[exp(theta int |alpha|_r ds)] and E_nu[exp(theta sum |alpha|)].

    Warns with :class:`HeavyTailWarning` when the top 1% of samples carry
    more than half of either sample mean.
    """
    alpha = alpha if isinstance(alpha, Field) else Field.static(np.asarray(alpha, dtype=float))
    ens = paths if paths is not None else simulate_ensemble(r, nu, t, n, seed, cap=cap,
                                                            workers=workers)
    keep = ~ens.truncated
    a_abs = alpha.absolute()
    integ = ens.path_sum(segment_integrals(ens, a_abs.contract(r)))
    jumps = ens.path_sum(np.abs(jump_values(ens, alpha)), where="jumps")
    out, heavy = [], False
    for tag, x in (("exp-integral", integ), ("exp-jump-sum", jumps)):
        s = np.exp(theta * x[keep])
        if _top_share(s) > 0.5:
            heavy = True
            warnings.warn(f"{tag}: top 1% of samples carry over half of the mean",
                          HeavyTailWarning, stacklevel=2)
        se = float(s.std(ddof=1) / math.sqrt(len(s))) if len(s) > 1 else float("nan")
        out.append(ResponseEstimate(float(s.mean()), se, int(len(s)), ens.seed, tag,
                                    int((~keep).sum())))
    return ExpMomentReport(out[0], out[1], heavy)


def theta_scan(r: RateMatrix, alpha, thetas, t, nu, n=10_000, seed=0, workers=None):
    """Exponential moments over a theta grid on common paths.

    Returns ``(best_theta, rows)``: the largest theta whose estimates are
    finite and free of heavy-tail warnings (``None`` if there is none), and
    one row per theta. A failure is not evidence that no theta works.
    """
    ens = simulate_ensemble(r, nu, t, n, seed, workers=workers)
    rows, best = [], None
    for th in sorted(float(x) for x in thetas):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HeavyTailWarning)
            rep = exp_moment_mc(r, alpha, th, t, nu, paths=ens)
        ok = math.isfinite(rep.integral.value) and not rep.heavy_tail
        rows.append({"theta": th, "integral": rep.integral.value,
                     "integral_se": rep.integral.stderr, "jump_sum": rep.jump_sum.value,
                     "heavy_tail": rep.heavy_tail, "ok": ok})
        if ok:
            best = th
    return best, rows


# ----------------------------------------------------------------------------
# confining potential on a box of Z^d
# ----------------------------------------------------------------------------
class ConfiningPotentialModel:
    """Nearest-neighbour walk on the box {|x|_inf <= R} of Z^d.

    Rates are ``exp(-(V(y) - V(x)) / 2)``; jumps leaving the box are
    suppressed, which keeps reversibility with respect to ``exp(-V)``.

    Parameters
    ----------
    V : callable
        Potential evaluated on integer coordinates of shape (m, d).
    d : int
    R : int
    """

    def __init__(self, V, d, R):
        if int(d) < 1 or int(R) < 1:
            raise ValueError("need d >= 1 and R >= 1")
        self.V, self.d, self.R = V, int(d), int(R)
        side = np.arange(-self.R, self.R + 1)
        self.coords = np.array(list(itertools.product(side, repeat=self.d)), dtype=np.int64)
        self.n = len(self.coords)
        self.V_values = self.potential(self.coords)

    def potential(self, x):
        return np.asarray(self.V(np.asarray(x)), dtype=float).reshape(len(x))

    def with_radius(self, R):
        return ConfiningPotentialModel(self.V, self.d, R)

    def index(self, x):
        x = np.asarray(x, dtype=np.int64) + self.R
        side = 2 * self.R + 1
        return (x * side ** np.arange(self.d - 1, -1, -1)).sum(axis=-1)

    def directions(self):
        eye = np.eye(self.d, dtype=np.int64)
        return np.concatenate([eye, -eye])

    @property
    def edges(self):
        """Pairs (x, y) of box states that are lattice neighbours."""
        if "_edges" not in self.__dict__:
            rows, cols = [], []
            for e in self.directions():
                y = self.coords + e
                inside = np.all(np.abs(y) <= self.R, axis=1)
                rows.append(np.flatnonzero(inside))
                cols.append(self.index(y[inside]))
            self._edges = (np.concatenate(rows), np.concatenate(cols))
        return self._edges

    @property
    def rates(self) -> RateMatrix:
        if "_rates" not in self.__dict__:
            rows, cols = self.edges
            vals = np.exp(-0.5 * (self.V_values[cols] - self.V_values[rows]))
            self._rates = _rates_matrix(rows, cols, vals, self.n)
        return self._rates

    @property
    def pi(self):
        w = np.exp(-(self.V_values - self.V_values.min()))
        return w / w.sum()

    @property
    def chain(self) -> StationaryChain:
        if "_chain" not in self.__dict__:
            self._chain = StationaryChain(self.rates, self.pi)
        return self._chain

    def log_partition(self):
        """log of sum over the box of exp(-V)."""
        m = self.V_values.min()
        return float(-m + np.log(np.sum(np.exp(-(self.V_values - m)))))

    def edge_array(self, E):
        """Pair array of ``E(x, y)`` on box edges; ``E`` takes coordinate arrays."""
        rows, cols = self.edges
        vals = np.asarray(E(self.coords[rows], self.coords[cols]), dtype=float)
        F = np.zeros((self.n, self.n))
        F[rows, cols] = vals
        return F

    def perturbation(self, E, profile: TimeProfile | None = None) -> Perturbation:
        return Perturbation.decoupled(profile or Constant(1.0), self.edge_array(E))

    def __repr__(self):
        return f"ConfiningPotentialModel(d={self.d}, R={self.R}, n={self.n})"


@dataclass(frozen=True)
class ConfiningReport:
    radii: list
    running_max: list
    plateau: bool
    relative_growth: float
    worst_state: list

    def to_dict(self):
        return {"radii": self.radii, "running_max": self.running_max, "plateau": self.plateau,
                "relative_growth": self.relative_growth, "worst_state": self.worst_state,
                "truncated_verdict": True}


def confining_sums(model: ConfiningPotentialModel, E):
    """sum over all 2d lattice neighbours y of E(x, y) exp(-(V(y) - V(x)) / 2), per box state."""
    x = model.coords
    out = np.zeros(model.n)
    for e in model.directions():
        y = x + e
        dv = model.potential(y) - model.V_values
        out += np.asarray(E(x, y), dtype=float) * np.exp(-0.5 * dv)
    return out


def confining_check(model: ConfiningPotentialModel, E, plateau_tol=0.01) -> ConfiningReport:
    """Running maximum of the confining sum over growing boxes.

    The sum is taken over every lattice neighbour, including those outside
    the box, so that the quantity matches its untruncated definition on the
    states that are checked. The maximum plateaus when the last doubling of
    the radius changes it by less than ``plateau_tol`` (relative).
    """
    sums = confining_sums(model, E)
    shell = np.max(np.abs(model.coords), axis=1)
    radii = list(range(0, model.R + 1))
    running = [float(np.max(sums[shell <= rho])) for rho in radii]
    half = running[model.R // 2]
    top = running[-1]
    growth = (top - half) / max(abs(half), 1e-300) if top != half else 0.0
    worst = model.coords[int(np.argmax(sums))].tolist()
    return ConfiningReport(radii, running, bool(growth < plateau_tol), float(growth), worst)
