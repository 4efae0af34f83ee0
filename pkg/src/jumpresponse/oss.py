"""Oscillatory steady state of a periodically driven finite chain.

Notation: ``L*`` is the generator of the reversed chain (the adjoint of
``L`` in L^2(pi)), ``psi_hat[k]`` are the Fourier modes of the psi field and

    a_t = int_0^inf e^{sL*} psi_{t-s} ds = sum_k e^{ik omega t} (ik omega - L*)^{-1} psi_hat[k],

where for k = 0 the inverse is taken on mean-zero functions. Every
quantity is computed by a resolvent route and by a truncated time-domain
quadrature, and the two are compared.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .core import PerturbedKernel, RateMatrix, StationaryChain
from .errors import CrossCheckFailure, NotIrreducible, SolverFailure
from .fields import Field
from .profiles import _is_multiple
from .quadrature import adaptive_simpson
from .response_exact import adjoint_propagator, forward_propagator, kolmogorov_forward

K_MAX = 16
DENSE_SOLVE_MAX = 2000


# ----------------------------------------------------------------------------
# resolvents
# ----------------------------------------------------------------------------
class Resolvent:
    """Solves (z - A) h = f for a generator matrix ``A`` with stationary law ``pi``.

    For z = 0 the solution is the unique mean-zero one, found from the bordered
    system [[-A, 1], [pi, 0]]. Factorizations are cached per z.
    """

    def __init__(self, A, pi):
        self.A = A
        self.pi = np.asarray(pi, dtype=float)
        self.n = A.shape[0]
        self.sparse = sp.issparse(A) and self.n > DENSE_SOLVE_MAX
        self._lu = {}

    def _factor(self, z):
        key = complex(z)
        lu = self._lu.get(key)
        if lu is not None:
            return lu
        n = self.n
        if self.sparse:
            M = (key * sp.identity(n, format="csc") - sp.csc_matrix(self.A)).astype(complex)
            if key == 0:
                M = sp.bmat([[M, np.ones((n, 1))], [self.pi[None, :], None]], format="csc")
            lu = ("sparse", spla.splu(M.astype(complex)))
        else:
            A = self.A.toarray() if sp.issparse(self.A) else np.asarray(self.A)
            M = key * np.eye(n) - A
            if key == 0:
                M = np.block([[M, np.ones((n, 1))], [self.pi[None, :], np.zeros((1, 1))]])
            M = M.astype(complex)
            lu = ("dense", scipy.linalg.lu_factor(M, check_finite=True))
        self._lu[key] = lu
        return lu

    def solve(self, z, f):
        f = np.asarray(f)
        kind, lu = self._factor(z)
        rhs = np.concatenate([f, [0.0]]) if complex(z) == 0 else f
        if kind == "sparse":
            x = lu.solve(rhs.astype(complex))
        else:
            x = scipy.linalg.lu_solve(lu, rhs)
        x = x[: self.n]
        M_res = (complex(z) * x - self.A @ x) - f
        if complex(z) == 0:
            M_res = M_res - self.pi @ M_res  # only the mean-zero part is constrained
        res = float(np.max(np.abs(M_res)))
        scale = max(1.0, float(np.max(np.abs(f))) if f.size else 1.0)
        if not np.isfinite(res) or res > 1e-8 * scale * max(1.0, abs(z)):
            raise SolverFailure(f"resolvent residual {res:.2e} at z = {z}")
        return x


def resolvent_solver(chain: StationaryChain, adjoint=True):
    name = "_res_adj" if adjoint else "_res_fwd"
    val = chain.__dict__.get(name)
    if val is None:
        val = Resolvent(chain.Qstar if adjoint else chain.Q, chain.pi)
        chain.__dict__[name] = val
    return val


# ----------------------------------------------------------------------------
# spectral gap
# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class SpectralGapEstimate:
    kappa: float
    C: float

    def horizon(self, tol=1e-10, scale=1.0):
        """Time s* with C e^{-kappa s*} scale <= tol."""
        return max(0.0, math.log(max(self.C * scale, tol) / tol) / self.kappa)


def estimate_gap(chain: StationaryChain, n_probes=8, seed=0, grid_points=41):
    """Fit ||e^{sL*} f|| <= C e^{-kappa s} ||f|| over random mean-zero probes.

    ``kappa`` is the smallest least-squares decay rate over the probes;
    ``C`` is then the smallest constant for which the bound holds on every
    probed (s, f).
    """
    rng = np.random.default_rng(seed)
    prop = adjoint_propagator(chain)
    pi = chain.pi
    probes = rng.standard_normal((chain.n, n_probes))
    probes -= pi @ probes
    norms0 = np.sqrt(pi @ probes ** 2)
    # horizon: long enough for a 1e-6 decay of the slowest probe
    S = 2.0 / float(np.max(chain.r.holding))
    for _ in range(60):
        end = prop.apply(probes, S)
        if np.max(np.sqrt(pi @ end ** 2) / norms0) < 1e-6:
            break
        S *= 2.0
    s = np.linspace(0.0, S, grid_points)
    logs = np.empty((grid_points, n_probes))
    for i, si in enumerate(s):
        logs[i] = np.log(np.sqrt(pi @ prop.apply(probes, si) ** 2) / norms0)
    tail = s >= 0.25 * S
    slopes = np.polyfit(s[tail], logs[tail], 1)[0]
    kappa = float(-np.max(slopes))
    if not kappa > 0:
        raise SolverFailure("no exponential decay found on mean-zero functions")
    C = float(np.max(np.exp(logs + kappa * s[:, None])))
    return SpectralGapEstimate(kappa, max(C, 1.0))


def spectrum_check(chain: StationaryChain, tol=1e-10):
    """Zero must be a simple eigenvalue of L*; all others must have Re < 0."""
    A = chain.Qstar.toarray() if sp.issparse(chain.Qstar) else chain.Qstar
    ev = np.linalg.eigvals(A)
    zero = np.abs(ev.real) <= tol
    return {
        "eigenvalues": ev,
        "n_zero": int(np.sum(zero)),
        "max_nonzero_real": float(np.max(ev.real[~zero])) if np.any(~zero) else float("-inf"),
        "ok": bool(np.sum(zero) == 1 and np.all(ev.real[~zero] < -tol)),
    }


# ----------------------------------------------------------------------------
# periodic driving
# ----------------------------------------------------------------------------
class PeriodicDriving:
    """A T-periodic perturbation of a stationary chain, with Fourier modes of psi.

    Parameters
    ----------
    chain : StationaryChain
    g : Field
        Perturbation on pairs; its period must divide ``T`` (static fields are allowed).
    T : float
    k_max : int
        Harmonics kept; the tail size is stored in ``tail``.
    """

    def __init__(self, chain: StationaryChain, g: Field, T, k_max=K_MAX):
        self.chain = chain
        self.g = g
        self.T = float(T)
        self.omega = 2.0 * math.pi / self.T
        if not g.is_static:
            p = g.period
            if p is None:
                raise ValueError("perturbation has no declared period")
            if not _is_multiple(self.T, p):
                raise ValueError(f"perturbation period {p} does not divide T = {self.T}")
        self.psi = chain.psi_field(g)
        self.k_max = int(k_max)
        ks = np.arange(-self.k_max, self.k_max + 1)
        self.ks = ks
        self.psi_hat = np.array([self.psi.fourier(int(k), self.omega) for k in ks])
        norms = np.max(np.abs(self.psi_hat), axis=1)
        self.tail = float(norms[0] + norms[-1])
        if self.tail > 1e-8 * max(1.0, float(norms.max())):
            warnings.warn(f"psi Fourier tail {self.tail:.2e} at k_max = {self.k_max}",
                          RuntimeWarning, stacklevel=2)
        self._active = [i for i, k in enumerate(ks) if norms[i] > 1e-15]

    def mode(self, k):
        return self.psi_hat[int(k) + self.k_max] if abs(k) <= self.k_max else \
            np.zeros(self.chain.n, dtype=complex)

    def psi_reconstructed(self, t):
        ph = np.exp(1j * self.ks * self.omega * t)
        return ph @ self.psi_hat

    @cached_property
    def _h(self):
        """h_k = (ik omega - L*)^{-1} psi_hat[k] for active harmonics."""
        res = resolvent_solver(self.chain, adjoint=True)
        return {int(self.ks[i]): res.solve(1j * self.ks[i] * self.omega, self.psi_hat[i])
                for i in self._active}

    @cached_property
    def gap(self):
        return estimate_gap(self.chain)

    @cached_property
    def psi_sup(self):
        ts = np.linspace(0.0, self.T, 33)
        return max(float(np.max(np.abs(self.psi.at(s)))) for s in ts)

    def horizon(self, tol=1e-10):
        return self.gap.horizon(tol, max(self.psi_sup, 1e-300) * math.sqrt(1.0 / np.min(self.chain.pi)))


# ----------------------------------------------------------------------------
# monodromy and pi_lambda
# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class MonodromyMatrix:
    P: np.ndarray
    lam: float
    T: float


def monodromy(r: RateMatrix, g: Field, lam, T) -> MonodromyMatrix:
    """One-period transition matrix of the perturbed chain, row by row."""
    rk = PerturbedKernel(r, g, lam)
    rows = [kolmogorov_forward(rk, x, T).probs[-1] for x in range(r.n)]
    return MonodromyMatrix(np.array(rows), float(lam), float(T))


def oss_distribution(M: MonodromyMatrix | np.ndarray, tol=1e-8):
    """Left fixed vector of the monodromy matrix (the time-0 OSS marginal)."""
    P = M.P if isinstance(M, MonodromyMatrix) else np.asarray(M)
    n = P.shape[0]
    ncomp, _ = connected_components(sp.csr_matrix(P > 1e-14), directed=True, connection="strong")
    if ncomp != 1:
        raise NotIrreducible("monodromy matrix is reducible")
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = scipy.linalg.solve(A, b)
    if np.any(pi <= 0) or np.max(np.abs(pi @ P - pi)) > tol:
        raise SolverFailure("OSS fixed vector residual too large")
    return pi


# ----------------------------------------------------------------------------
# derivative field and responses
# ----------------------------------------------------------------------------
def _sup(x):
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def oss_derivative_resolvent(driving: PeriodicDriving, t):
    a = np.zeros(driving.chain.n, dtype=complex)
    for k, h in driving._h.items():
        a += np.exp(1j * k * driving.omega * t) * h
    return a.real


def oss_derivative_quadrature(driving: PeriodicDriving, t, tol=1e-10):
    chain = driving.chain
    prop = adjoint_propagator(chain)
    s_star = driving.horizon(tol)
    return adaptive_simpson(lambda s: prop.apply(driving.psi.at(t - s), s), 0.0, s_star,
                            tol / max(s_star, 1.0))


def oss_derivative(driving: PeriodicDriving, t, check=True, tol=1e-6):
    """a_t = d/dlam at 0 of pi_{lam,t} / pi, by resolvent sum and by quadrature.

    Raises
    ------
    CrossCheckFailure
        If the two algorithms differ by more than ``tol`` in sup norm.
    """
    a = oss_derivative_resolvent(driving, t)
    if check:
        b = oss_derivative_quadrature(driving, t)
        if _sup(a - b) > tol:
            raise CrossCheckFailure(f"a_t: resolvent and quadrature differ by {_sup(a - b):.2e}")
    return a


def oss_lr_observable(v, driving: PeriodicDriving, t, check=True, tol=1e-6):
    """Response of E[v(X_t)] in the OSS: pi[v a_t]."""
    chain = driving.chain
    v = np.asarray(v, dtype=float)
    val = float(chain.pi @ (v * oss_derivative_resolvent(driving, t)))
    if check:
        prop = forward_propagator(chain)
        s_star = driving.horizon(1e-11) + driving.gap.horizon(1e-11, _sup(v))
        q = adaptive_simpson(
            lambda s: float(np.dot(chain.pi * driving.psi.at(t - s), prop.apply(v, s))),
            0.0, s_star, 1e-11)
        if abs(q - val) > tol * max(1.0, abs(val)):
            raise CrossCheckFailure(f"OSS observable response: {val} vs quadrature {q}")
    return val


def _oss_pairing(w: Field, driving, t, tol):
    """int_0^t pi[w(u, .) a_u] du by resolvent modes."""
    pi = driving.chain.pi
    return adaptive_simpson(lambda u: float(pi @ (w.at(u) * oss_derivative_resolvent(driving, u))),
                            0.0, t, tol)


def _oss_pairing_quadrature(w: Field, driving, t, tol):
    chain = driving.chain
    prop = forward_propagator(chain)
    s_star = driving.horizon(1e-11) + driving.gap.horizon(1e-11, _sup(w.at(0.0)) + w_bound(w))

    def inner(u):
        wu = w.at(u)
        return adaptive_simpson(
            lambda s: float(np.dot(chain.pi * driving.psi.at(u - s), prop.apply(wu, s))),
            0.0, s_star, tol / max(t, 1.0))
    return adaptive_simpson(inner, 0.0, t, tol)


def w_bound(w):
    try:
        return w.bound
    except ValueError:
        return 1.0


def _as_field(v):
    return v if isinstance(v, Field) else Field.static(np.asarray(v, dtype=float))


def oss_lr_time_integral(v, driving: PeriodicDriving, t, check=True, tol=1e-6):
    """Response of E[int_0^t v(s, X_s) ds] in the OSS."""
    v = _as_field(v)
    val = _oss_pairing(v, driving, t, 1e-12)
    if check:
        q = _oss_pairing_quadrature(v, driving, t, 1e-10)
        if abs(q - val) > tol * max(1.0, abs(val)):
            raise CrossCheckFailure(f"OSS time-integral response: {val} vs quadrature {q}")
    return val


def oss_lr_jump(alpha, driving: PeriodicDriving, t, check=True, tol=1e-6):
    """Response of E[sum of alpha over jumps in [0, t]] in the OSS."""
    chain = driving.chain
    alpha = _as_field(alpha)
    first = adaptive_simpson(lambda s: float(chain.pi @ (alpha * driving.g).contract(chain.r).at(s)),
                             0.0, t, 1e-12)
    a_r = alpha.contract(chain.r)
    second = _oss_pairing(a_r, driving, t, 1e-12)
    if check:
        q = _oss_pairing_quadrature(a_r, driving, t, 1e-10)
        if abs(q - second) > tol * max(1.0, abs(second)):
            raise CrossCheckFailure(f"OSS jump response: {second} vs quadrature {q}")
    return first + second


def fourier_response(v, driving: PeriodicDriving, k, check=True, tol=1e-8):
    """k-th Fourier coefficient of the OSS response of E[v(X_t)].

    Equals sum_x pi(x) psi_hat[k](x) ((ik omega - L)^{-1} v0)(x) with v0 = v - pi[v].
    """
    chain = driving.chain
    if np.iscomplexobj(np.asarray(v)):
        raise TypeError("observable must be real")
    v = np.asarray(v, dtype=float)
    psi_k = driving.mode(k)
    if not np.any(psi_k):
        return 0j
    v0 = v - chain.pi @ v
    y = resolvent_solver(chain, adjoint=False).solve(1j * k * driving.omega, v0)
    val = complex(np.sum(chain.pi * psi_k * y))
    if check:
        q = fourier_response_quadrature(v, driving, k)
        if abs(q - val) > tol * max(1.0, abs(val)):
            raise CrossCheckFailure(f"Fourier response: {val} vs quadrature {q}")
    return val


def fourier_response_quadrature(v, driving: PeriodicDriving, k, tol=1e-12):
    """Same coefficient as :func:`fourier_response`, as a truncated Laplace integral."""
    chain = driving.chain
    v = np.asarray(v, dtype=float)
    psi_k = driving.mode(k)
    if not np.any(psi_k):
        return 0j
    v0 = v - chain.pi @ v
    prop = forward_propagator(chain)
    s_star = driving.gap.horizon(1e-13, _sup(v0) * _sup(psi_k) / float(np.min(chain.pi)))
    w = driving.omega * k
    return complex(adaptive_simpson(
        lambda s: np.exp(-1j * w * s) * np.dot(chain.pi * psi_k, prop.apply(v, s)),
        0.0, s_star, tol))


def fd_oss_shift(r: RateMatrix, g: Field, T, lam=1e-4, pi=None):
    """(pi_lam - pi) / lam from monodromy fixed vectors."""
    pi0 = oss_distribution(monodromy(r, g, 0.0, T)) if pi is None else pi
    pil = oss_distribution(monodromy(r, g, lam, T))
    return (pil - pi0) / lam


def fd_oss_observable(r: RateMatrix, g: Field, v, T, t, lam=1e-4):
    """(E_{pi_lam}[v(X_t^lam)] - E_pi[v(X_t)]) / lam via the Kolmogorov equation."""
    v = np.asarray(v, dtype=float)
    vals = []
    for sign in (1.0, -1.0):
        gl = g * sign
        pil = oss_distribution(monodromy(r, gl, lam, T))
        rk = PerturbedKernel(r, gl, lam)
        mu = kolmogorov_forward(rk, pil, t).probs[-1] if t > 0 else pil
        vals.append(float(mu @ v))
    return (vals[0] - vals[1]) / (2.0 * lam)
