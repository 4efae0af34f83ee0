"""Deterministic linear response at stationarity and Kolmogorov integration.

Stationary responses are written through the two-time correlation
``E_pi[v(X_s) psi(X_0)] = sum_x pi(x) psi(x) (e^{sL} v)(x)`` and integrated by
adaptive Simpson. Perturbed marginals come from the forward equation
``mu' = mu Q_s^lam`` integrated with an embedded Runge-Kutta pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .core import PerturbedKernel, RateMatrix, StationaryChain
from .errors import StepperFailure
from .fields import Field
from .quadrature import adaptive_simpson

EXPM_MAX = 64


class Propagator:
    """Action of the semigroup e^{sA} for a generator matrix ``A``.

    Small problems (n <= 64) use dense scaling-and-squaring; larger ones use
    uniformization on ``P = I + A / Lam`` with ``Lam >= max |A_xx|``.
    Exponentials are memoized by ``s``.
    """

    def __init__(self, A, method=None, cache_size=4096):
        self.n = A.shape[0]
        self.method = method or ("expm" if self.n <= EXPM_MAX else "uniformization")
        if self.method == "expm":
            self.A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        elif self.method == "uniformization":
            self.A = sp.csr_matrix(A)
            self.rate = 1.02 * float(np.max(np.abs(self.A.diagonal())))
            self.P = (sp.identity(self.n, format="csr") + self.A / self.rate).tocsr()
        else:
            raise ValueError(f"unknown propagation method {self.method!r}")
        self._cache = {}
        self._cache_size = cache_size

    def matrix(self, s):
        """e^{sA} as a dense matrix."""
        s = float(s)
        if s < 0:
            raise ValueError("propagation time must be nonnegative")
        M = self._cache.get(s)
        if M is None:
            if self.method == "expm":
                M = scipy.linalg.expm(s * self.A)
            else:
                M = self.apply(np.eye(self.n), s)
            if len(self._cache) >= self._cache_size:
                self._cache.clear()
            self._cache[s] = M
        return M

    def apply(self, f, s):
        """e^{sA} f for a vector or a matrix of column vectors."""
        s = float(s)
        if s == 0.0:
            return np.array(f, copy=True)
        if self.method == "expm":
            return self.matrix(s) @ f
        return self._uniformized(np.asarray(f), s, self.P)

    def apply_left(self, mu, s):
        """mu e^{sA} for a row vector ``mu``."""
        s = float(s)
        if s == 0.0:
            return np.array(mu, copy=True)
        if self.method == "expm":
            return np.asarray(mu) @ self.matrix(s)
        return self._uniformized(np.asarray(mu), s, self.P.T.tocsr())

    def _uniformized(self, f, s, P, tol=1e-15):
        # split so each piece has Poisson mean <= 30 (no underflow of e^{-mean})
        pieces = max(1, math.ceil(self.rate * s / 30.0))
        mean = self.rate * s / pieces
        out = f.astype(np.result_type(f, float))
        kmax = int(mean + 12.0 * math.sqrt(mean) + 30)
        for _ in range(pieces):
            term = out
            weight = math.exp(-mean)
            acc = weight * term
            total = weight
            for k in range(1, kmax + 1):
                term = P @ term
                weight *= mean / k
                acc = acc + weight * term
                total += weight
                if 1.0 - total < tol and k > mean:
                    break
            out = acc
        return out


def forward_propagator(chain: StationaryChain):
    return _cached(chain, "_fwd", lambda: Propagator(chain.Q))


def adjoint_propagator(chain: StationaryChain):
    return _cached(chain, "_adj", lambda: Propagator(chain.Qstar))


def _cached(obj, name, build):
    val = obj.__dict__.get(name)
    if val is None:
        val = build()
        obj.__dict__[name] = val
    return val


def propagate(chain: StationaryChain, f, s, direction="forward"):
    """e^{sL} f (``forward``) or e^{sL*} f (``adjoint``)."""
    prop = forward_propagator(chain) if direction == "forward" else adjoint_propagator(chain)
    return prop.apply(np.asarray(f), s)


def correlation(chain: StationaryChain, v, psi, s):
    """Stationary two-time correlation  sum_x pi(x) psi(x) (e^{sL} v)(x)."""
    return float(np.dot(chain.pi * np.asarray(psi), propagate(chain, v, s)))


def _state_field(f):
    return f if isinstance(f, Field) else Field.static(np.asarray(f, dtype=float))


def lr_observable_stationary(chain: StationaryChain, v, g: Field, t, tol=1e-9, form="shifted"):
    """Derivative at lam = 0 of E_pi[v(X_t^lam)].

    ``form="shifted"`` integrates  s -> E_pi[v(X_s) psi_{t-s}(X_0)];
    ``form="direct"`` integrates  s -> E_pi[v(X_t) psi_{t-s}(X_{t-s})] with the
    law at time t - s propagated explicitly from pi, so the two forms agree
    only when pi is invariant.
    """
    v = np.asarray(v, dtype=float)
    psi = chain.psi_field(g)
    if form == "shifted":
        def integrand(s):
            return correlation(chain, v, psi.at(t - s), s)
    elif form == "direct":
        back = forward_propagator(chain)

        def integrand(s):
            law = back.apply_left(chain.pi, t - s)
            return float(np.dot(law * psi.at(t - s), propagate(chain, v, s)))
    else:
        raise ValueError(f"unknown form {form!r}")
    return adaptive_simpson(integrand, 0.0, t, tol / max(t, 1.0))


def _double_correlation(chain, w: Field, psi: Field, t, tol):
    """int_0^t ds int_0^s du  correlation(w(s, .), psi_{s-u}, u)."""
    inner_tol = 0.1 * tol / max(t, 1.0)

    def inner(s):
        ws = w.at(s)
        if not np.any(ws):
            return 0.0
        return adaptive_simpson(lambda u: correlation(chain, ws, psi.at(s - u), u), 0.0, s,
                                inner_tol / max(s, 1.0) if s > 0 else inner_tol)

    return adaptive_simpson(inner, 0.0, t, tol / max(t, 1.0))


def lr_time_integral_stationary(chain: StationaryChain, v, g: Field, t, tol=1e-8):
    """Derivative at lam = 0 of E_pi[int_0^t v(s, X_s^lam) ds]."""
    return _double_correlation(chain, _state_field(v), chain.psi_field(g), t, tol)


def lr_jump_stationary(chain: StationaryChain, alpha, g: Field, t, tol=1e-8):
    """Derivative at lam = 0 of E_pi[sum over jumps of alpha]."""
    alpha = alpha if isinstance(alpha, Field) else Field.static(alpha)
    ag_r = (alpha * g).contract(chain.r)
    first = adaptive_simpson(lambda s: float(chain.pi @ ag_r.at(s)), 0.0, t, 0.1 * tol)
    second = _double_correlation(chain, alpha.contract(chain.r), chain.psi_field(g), t, tol)
    return first + second


# ----------------------------------------------------------------------------
# forward Kolmogorov integration
# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class MarginalCurve:
    times: np.ndarray
    probs: np.ndarray  # shape (len(times), n)

    def at(self, i):
        return self.probs[i]


def _generator_fn(rk: PerturbedKernel):
    base = rk.base.dense()
    if rk.lam == 0.0 or rk.g.is_static:
        Q = (rk.frozen() if rk.lam else rk.base).generator()
        Q = Q.toarray() if sp.issparse(Q) else Q
        return lambda s: Q
    lam, g = rk.lam, rk.g

    def Q(s):
        R = base * np.exp(lam * g.at(s))
        return R - np.diag(R.sum(axis=1))
    return Q


def kolmogorov_forward(rk: PerturbedKernel, nu, t, grid=None, rtol=1e-10, atol=1e-13):
    """Marginals of the perturbed process on ``grid`` (defaults to [0, t]).

    Raises
    ------
    StepperFailure
        If the stepper fails or mass drifts by more than 1e-8.
    """
    n = rk.base.n
    if isinstance(nu, (int, np.integer)):
        mu0 = np.zeros(n)
        mu0[int(nu)] = 1.0
    else:
        mu0 = np.asarray(nu, dtype=float)
    grid = np.array([0.0, t] if grid is None else grid, dtype=float)
    if t <= 0 or np.any(grid < 0) or np.any(grid > t):
        raise ValueError("grid must lie inside [0, t]")
    Q = _generator_fn(rk)
    sol = solve_ivp(lambda s, mu: mu @ Q(s), (0.0, float(t)), mu0, method="DOP853",
                    t_eval=grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise StepperFailure(sol.message)
    probs = sol.y.T
    mass = probs.sum(axis=1)
    if np.max(np.abs(mass - 1.0)) > 1e-8 or np.min(probs) < -1e-10:
        raise StepperFailure(f"mass defect {np.max(np.abs(mass - 1.0)):.2e}")
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    return MarginalCurve(grid, probs)


def response_sensitivity(r: RateMatrix, g: Field, nu, t, v=None, alpha=None, rtol=1e-11,
                         atol=1e-13):
    """Exact lam-derivatives at 0 for any initial law, by the sensitivity equations.

    Integrates ``mu' = mu Q`` together with ``m' = m Q + mu dQ_s`` where
    ``dQ_s`` is the lam-derivative of the perturbed generator, and
    accumulates the derivatives of E[v(X_t)], E[int_0^t v(s, X_s) ds] and
    E[sum alpha]. Returns a dict with the available entries.
    """
    R = r.dense()
    n = r.n
    Q = R - np.diag(R.sum(axis=1))
    mu0 = np.asarray(nu, dtype=float) if not isinstance(nu, (int, np.integer)) \
        else np.eye(n)[int(nu)]
    vf = _state_field(v) if v is not None else None
    af = (alpha if isinstance(alpha, Field) else Field.static(alpha)) if alpha is not None else None
    a_r = af.contract(r) if af is not None else None
    ag_r = (af * g).contract(r) if af is not None else None

    def rhs(s, y):
        mu, m = y[:n], y[n:2 * n]
        Rg = R * g.at(s)
        dQ = Rg - np.diag(Rg.sum(axis=1))
        out = [mu @ Q, m @ Q + mu @ dQ]
        out.append([m @ vf.at(s) if vf is not None else 0.0,
                    (m @ a_r.at(s) + mu @ ag_r.at(s)) if af is not None else 0.0])
        return np.concatenate([out[0], out[1], out[2]])

    y0 = np.concatenate([mu0, np.zeros(n), np.zeros(2)])
    sol = solve_ivp(rhs, (0.0, float(t)), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise StepperFailure(sol.message)
    y = sol.y[:, -1]
    res = {"marginal_derivative": y[n:2 * n]}
    if vf is not None:
        res["observable"] = float(y[n:2 * n] @ vf.at(t))
        res["time_integral"] = float(y[2 * n])
    if af is not None:
        res["jump"] = float(y[2 * n + 1])
    return res
