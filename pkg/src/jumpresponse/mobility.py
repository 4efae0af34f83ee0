"""Nearest-neighbour walks on the discrete torus and their complex mobility.

Rates are kept per direction: ``plus[j][x] = r(x, x + e_j)`` and
``minus[j][x] = r(x, x - e_j)``, arrays of shape ``(N,) * d``. This keeps
``c``, ``gamma``, the reversed rates and ``Psi`` well defined even for
``N = 2``, where both neighbours of a site coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .core import PerturbedKernel, RateMatrix, StationaryChain, stationary
from .errors import NonPositiveRate, TruncatedPath
from .fields import Perturbation
from .oss import Resolvent, estimate_gap, monodromy, oss_distribution
from .paths import eval_action_ensemble, simulate_ensemble
from .profiles import Cosine
from .quadrature import adaptive_simpson
from .response_exact import Propagator, kolmogorov_forward
from .response_mc import ResponseEstimate


class TorusModel:
    """Walk on (Z / N Z)^d with directional nearest-neighbour rates.

    Parameters
    ----------
    plus, minus : array_like, shape (d, N, ..., N)
        ``plus[j][x]`` is the rate of the jump x -> x + e_j and
        ``minus[j][x]`` the rate of x -> x - e_j.
    """

    def __init__(self, plus, minus, conductance=False):
        plus = np.asarray(plus, dtype=float)
        minus = np.asarray(minus, dtype=float)
        if plus.shape != minus.shape or plus.ndim < 2:
            raise ValueError("plus and minus must both have shape (d, N, ..., N)")
        d = plus.shape[0]
        N = plus.shape[1]
        if d not in (1, 2, 3) or plus.shape[1:] != (N,) * d:
            raise ValueError(f"expected shape (d, N, ..., N) with d in 1..3, got {plus.shape}")
        if N < 2:
            raise ValueError("torus side must be at least 2")
        if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))) \
                or np.any(plus <= 0) or np.any(minus <= 0):
            raise NonPositiveRate("every nearest-neighbour rate must be positive")
        self.d, self.N = d, N
        self.plus, self.minus = plus, minus
        self.conductance = conductance
        self.n = N ** d
        for a in (self.plus, self.minus):
            a.setflags(write=False)

    # -- geometry -----------------------------------------------------
    def shift_index(self, j, step):
        """Flat index of x + step * e_j for every flat x."""
        grid = np.arange(self.n).reshape((self.N,) * self.d)
        return np.roll(grid, -step, axis=j).ravel()

    @cached_property
    def rates(self) -> RateMatrix:
        rows, cols, vals = [], [], []
        base = np.arange(self.n)
        for j in range(self.d):
            for step, table in ((1, self.plus[j]), (-1, self.minus[j])):
                rows.append(base)
                cols.append(self.shift_index(j, step))
                vals.append(table.ravel())
        R = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.n, self.n)).tocsr()  # duplicates (N = 2) are summed
        return RateMatrix(R if self.n > 512 else R.toarray())

    @cached_property
    def pi(self):
        if self.conductance:
            return np.full(self.n, 1.0 / self.n)
        return stationary(self.rates)

    @cached_property
    def chain(self) -> StationaryChain:
        return StationaryChain(self.rates, self.pi)

    # -- directional quantities --------------------------------------
    @cached_property
    def reversed_plus(self):
        """r*(x, x + e_j) = pi(x + e_j) r(x + e_j, x) / pi(x), per direction."""
        out = []
        for j in range(self.d):
            up = self.shift_index(j, 1)
            out.append(self.pi[up] * self.minus[j].ravel()[up] / self.pi)
        return np.array(out)

    @cached_property
    def reversed_minus(self):
        out = []
        for j in range(self.d):
            dn = self.shift_index(j, -1)
            out.append(self.pi[dn] * self.plus[j].ravel()[dn] / self.pi)
        return np.array(out)

    @cached_property
    def c(self):
        return (self.plus + self.minus).reshape(self.d, self.n)

    @cached_property
    def gamma(self):
        return (self.plus - self.minus).reshape(self.d, self.n)

    @cached_property
    def Psi(self):
        """Psi(x) = -sum_{|e|=1} (r*(x, x+e) + r(x, x+e)) e, one row per coordinate."""
        fwd = self.reversed_plus + self.plus.reshape(self.d, self.n)
        bwd = self.reversed_minus + self.minus.reshape(self.d, self.n)
        return -(fwd - bwd)

    def field_E(self, v):
        """Pair array E(x, y) = (y - x) . v on nearest neighbours (needs N >= 3)."""
        if self.N < 3:
            raise ValueError("displacement field is ambiguous for N = 2")
        v = np.asarray(v, dtype=float)
        E = np.zeros((self.n, self.n))
        base = np.arange(self.n)
        for j in range(self.d):
            E[base, self.shift_index(j, 1)] = v[j]
            E[base, self.shift_index(j, -1)] = -v[j]
        return E

    def perturbation(self, v, omega):
        """g(t, x, y) = cos(omega t) (y - x) . v."""
        return Perturbation.decoupled(Cosine(omega), self.field_E(v))

    def velocity_observable(self, lam, omega, v, t):
        """x -> sum_e r_t^lam(x, x + e) (e . v)."""
        v = np.asarray(v, dtype=float)
        tau = math.cos(omega * t)
        out = np.zeros(self.n)
        for j in range(self.d):
            out += v[j] * (self.plus[j].ravel() * math.exp(lam * tau * v[j])
                           - self.minus[j].ravel() * math.exp(-lam * tau * v[j]))
        return out

    def __repr__(self):
        return f"TorusModel(d={self.d}, N={self.N})"


def build_torus(d, N, plus=None, minus=None, conductances=None):
    """Build a torus walk from rate tables or from edge conductances.

    ``plus``/``minus`` may be scalars (homogeneous), length-d sequences of
    scalars, or full ``(d, N, ..., N)`` arrays. ``conductances[j][x]`` is the
    weight of the edge {x, x + e_j}; it gives symmetric rates and uniform pi.
    """
    shape = (d,) + (N,) * d
    if conductances is not None:
        xi = np.broadcast_to(np.asarray(conductances, dtype=float), shape).copy()
        if np.any(xi <= 0):
            raise NonPositiveRate("conductances must be positive")
        minus = np.array([np.roll(xi[j], 1, axis=j) for j in range(d)])
        return TorusModel(xi, minus, conductance=True)
    if plus is None or minus is None:
        raise ValueError("give plus and minus rates, or conductances")

    def expand(a):
        a = np.asarray(a, dtype=float)
        if a.ndim == 1 and a.shape[0] == d:
            a = a.reshape((d,) + (1,) * d)
        return np.broadcast_to(a, shape).copy()
    return TorusModel(expand(plus), expand(minus))


def two_periodic_torus(N, r0p, r0m, r1p, r1m):
    """1D torus with rates depending on the parity of the site."""
    if N % 2:
        raise ValueError("N must be even")
    even = np.arange(N) % 2 == 0
    plus = np.where(even, r0p, r1p)[None, :]
    minus = np.where(even, r0m, r1m)[None, :]
    return TorusModel(plus, minus)


# ----------------------------------------------------------------------------
# mobility
# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class MobilityMatrix:
    omega: float
    sigma: np.ndarray
    restricted: bool = False  # omega = 0 solved on mean-zero functions

    def __getitem__(self, idx):
        return self.sigma[idx]


def _resolvent(model, adjoint=True):
    name = "_res_star" if adjoint else "_res"
    val = model.__dict__.get(name)
    if val is None:
        ch = model.chain
        val = Resolvent(ch.Qstar if adjoint else ch.Q, ch.pi)
        model.__dict__[name] = val
    return val


def mobility(model: TorusModel, omega) -> MobilityMatrix:
    """sigma_jk = pi[c_j] delta_jk + <gamma_j, (i omega - L*)^{-1} Psi_k>."""
    pi = model.pi
    res = _resolvent(model, adjoint=True)
    sigma = np.diag(model.c @ pi).astype(complex)
    for k in range(model.d):
        y = res.solve(1j * omega, model.Psi[k])
        sigma[:, k] += model.gamma @ (pi * y)
    return MobilityMatrix(float(omega), sigma, restricted=omega == 0)


def mobility_reversible(model: TorusModel, omega) -> MobilityMatrix:
    """sigma_jk = pi[c_j] delta_jk - 2 <gamma_j, (i omega - L)^{-1} gamma_k> (reversible walks)."""
    pi = model.pi
    res = _resolvent(model, adjoint=False)
    sigma = np.diag(model.c @ pi).astype(complex)
    for k in range(model.d):
        y = res.solve(1j * omega, model.gamma[k])
        sigma[:, k] -= 2.0 * (model.gamma @ (pi * y))
    return MobilityMatrix(float(omega), sigma, restricted=omega == 0)


def mobility_quadrature(model: TorusModel, omega, tol=1e-10):
    """Time-domain form: the resolvent replaced by int_0^inf e^{-i omega s} e^{sL*} ds."""
    chain = model.chain
    prop = Propagator(chain.Qstar)
    gap = estimate_gap(chain)
    scale = float(np.max(np.abs(model.Psi))) * float(np.max(np.abs(model.gamma))) + 1e-300
    s_star = gap.horizon(tol, scale / float(np.min(model.pi)))
    pi = model.pi

    def integrand(s):
        return np.exp(-1j * omega * s) * ((model.gamma * pi) @ prop.apply(model.Psi.T, s))

    corr = adaptive_simpson(integrand, 0.0, s_star, tol)
    sigma = np.diag(model.c @ pi).astype(complex) + corr
    return MobilityMatrix(float(omega), sigma)


def mobility_closed_form_two_periodic(r0p, r0m, r1p, r1m, omega):
    """Closed-form mobility of the 1D walk with 2-periodic rates."""
    rates = (r0p, r0m, r1p, r1m)
    if min(rates) <= 0:
        raise NonPositiveRate("all four rates must be positive")
    c0, c1 = r0p + r0m, r1p + r1m
    g0, g1 = r0p - r0m, r1p - r1m
    return c0 * c1 / (c0 + c1) * (2.0 + (g1 / c1 - g0 / c0) * (g0 - g1) / (1j * omega + c0 + c1))


def mobility_grid(model: TorusModel, omegas):
    return [mobility(model, w) for w in omegas]


def velocity_response(model: TorusModel, omega, v, t):
    """Derivative at lam = 0 of the mean velocity: Re(e^{i omega t} sigma(omega) v)."""
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError("v must be a unit vector")
    return (np.exp(1j * omega * t) * (mobility(model, omega).sigma @ v)).real


def oss_velocity(model: TorusModel, lam, omega, v, t):
    """Mean velocity along v in the OSS at phase t, from the Kolmogorov equation."""
    T = 2.0 * math.pi / abs(omega)
    v = np.asarray(v, dtype=float)
    # a negative strength is the positive one along -v
    g = model.perturbation(v if lam >= 0 else -v, omega)
    pil = oss_distribution(monodromy(model.rates, g, abs(lam), T))
    rk = PerturbedKernel(model.rates, g, abs(lam))
    mu = kolmogorov_forward(rk, pil, t).probs[-1] if t > 0 else pil
    return float(mu @ model.velocity_observable(lam, omega, v, t))


def velocity_fd_exact(model: TorusModel, omega, v, t, lam):
    """Central difference of the deterministic OSS velocity."""
    return (oss_velocity(model, lam, omega, v, t) - oss_velocity(model, -lam, omega, v, t)) / (2 * lam)


def velocity_fd_mc(model: TorusModel, omega, v, times, lam=1e-2, n=100_000, seed=0, workers=None):
    """Common-path finite difference of the OSS velocity by Girsanov reweighting.

    Unperturbed stationary paths are simulated over one period. For strength
    ``+-lam`` each path carries the weight ``(pi_lam / pi)(X_0) exp(-A_lam)``,
    which turns the stationary law into the OSS law of the perturbed walk.
    Phase 0 is read at the end of the period (the OSS is periodic), other
    phases at their own time.

    Returns a list of :class:`ResponseEstimate`, one per phase.
    """
    v = np.asarray(v, dtype=float)
    T = 2.0 * math.pi / abs(omega)
    g = model.perturbation(v, omega)
    pi = model.pi
    ens = simulate_ensemble(model.rates, pi, T, n, seed, workers=workers)
    if np.any(ens.truncated):
        raise TruncatedPath("truncated paths in the velocity check")
    init = {}
    for sign in (1.0, -1.0):
        gs = model.perturbation(sign * v, omega)
        init[sign] = oss_distribution(monodromy(model.rates, gs, lam, T)) / pi
    out = []
    for t in times:
        h = float(t) % T
        h = T if h == 0.0 else h
        sub = ens.restrict(h)
        vals = {}
        for sign in (1.0, -1.0):
            w = init[sign][sub.x0] * np.exp(-eval_action_ensemble(sub, g, sign * lam, model.rates))
            vals[sign] = w * model.velocity_observable(sign * lam, omega, v, h)[sub.final_state]
        x = (vals[1.0] - vals[-1.0]) / (2.0 * lam)
        out.append(ResponseEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))),
                                    len(x), int(seed), "girsanov-fd"))
    return out
