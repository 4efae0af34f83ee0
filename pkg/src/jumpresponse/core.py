"""Finite state spaces, jump-rate kernels, stationary laws and time reversal."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import NonPositiveRate, NotIrreducible, SolverFailure
from .fields import Field, Perturbation

DENSE_MAX = 512
DIRECT_SOLVE_MAX = 2000


@dataclass(frozen=True)
class StateSpace:
    labels: tuple

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValueError("a state space needs at least two states")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("state labels must be distinct")

    @classmethod
    def range(cls, n):
        return cls(tuple(range(n)))

    @property
    def n(self):
        return len(self.labels)

    def index(self, label):
        return self.labels.index(label)


class RateMatrix:
    """Jump rates r(x, y) on a finite state space.

    Stored as a dense array for ``n <= 512`` and as CSR otherwise. The
    diagonal must vanish and every holding rate must be positive.

    Parameters
    ----------
    rates : array_like or scipy.sparse matrix, shape (n, n)
    labels : sequence, optional
        State identifiers; defaults to ``0..n-1``.
    """

    def __init__(self, rates, labels=None):
        if sp.issparse(rates):
            R = sp.csr_matrix(rates, dtype=float)
            R.eliminate_zeros()
            diag = R.diagonal()
            data = R.data
        else:
            R = np.array(rates, dtype=float)
            if R.ndim != 2 or R.shape[0] != R.shape[1]:
                raise ValueError(f"rates must be square, got shape {R.shape}")
            diag = np.diag(R)
            data = R
        n = R.shape[0]
        if np.any(diag != 0.0):
            raise ValueError("rate matrix must have zero diagonal")
        if not np.all(np.isfinite(data)) or np.any(data < 0.0):
            raise NonPositiveRate("rates must be finite and nonnegative")
        if n > DENSE_MAX and not sp.issparse(R):
            R = sp.csr_matrix(R)
        elif n <= DENSE_MAX and sp.issparse(R):
            R = R.toarray()
        self._R = R
        if not sp.issparse(R):
            R.setflags(write=False)
        self.space = StateSpace(tuple(labels) if labels is not None else tuple(range(n)))
        if self.space.n != n:
            raise ValueError("label count does not match rate matrix size")
        self.holding = np.asarray(R.sum(axis=1)).ravel()
        self.holding.setflags(write=False)
        if np.any(self.holding <= 0.0):
            bad = int(np.flatnonzero(self.holding <= 0.0)[0])
            raise NonPositiveRate(f"state {self.space.labels[bad]!r} has zero holding rate")

    @classmethod
    def from_triples(cls, labels, triples):
        labels = list(labels)
        pos = {lab: i for i, lab in enumerate(labels)}
        n = len(labels)
        rows, cols, vals = [], [], []
        for x, y, rate in triples:
            if x == y:
                raise ValueError(f"self-loop at {x!r}")
            rows.append(pos[x])
            cols.append(pos[y])
            vals.append(float(rate))
        R = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return cls(R if n > DENSE_MAX else R.toarray(), labels)

    @property
    def n(self):
        return self.space.n

    @property
    def is_sparse(self):
        return sp.issparse(self._R)

    @property
    def matrix(self):
        """The stored representation (dense ndarray or CSR)."""
        return self._R

    def dense(self):
        return self._R.toarray() if self.is_sparse else np.array(self._R)

    def __call__(self, x, y):
        return float(self._R[x, y])

    @cached_property
    def edges(self):
        """Positive-rate edges as arrays ``(rows, cols, rates)`` in row-major order."""
        C = sp.csr_matrix(self._R)
        C.eliminate_zeros()
        C.sort_indices()
        rows = np.repeat(np.arange(self.n), np.diff(C.indptr))
        return rows, C.indices.copy(), C.data.copy()

    @cached_property
    def neighbors(self):
        """Padded neighbour table ``(idx, rate)`` of shape (n, max out-degree).

        Padding entries point at the state itself with rate zero.
        """
        rows, cols, vals = self.edges
        deg = np.bincount(rows, minlength=self.n)
        width = int(deg.max())
        idx = np.tile(np.arange(self.n)[:, None], (1, width))
        rate = np.zeros((self.n, width))
        start = np.concatenate([[0], np.cumsum(deg)[:-1]])
        slot = np.arange(len(rows)) - start[rows]
        idx[rows, slot] = cols
        rate[rows, slot] = vals
        return idx, rate

    @cached_property
    def irreducible(self):
        rows, cols, _ = self.edges
        graph = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        ncomp, _ = connected_components(graph, directed=True, connection="strong")
        return ncomp == 1

    def generator(self):
        """Matrix of L: off-diagonal r(x, y), diagonal -r_hat(x)."""
        if self.is_sparse:
            return (self._R - sp.diags(self.holding)).tocsr()
        return self._R - np.diag(self.holding)

    def apply_generator(self, f):
        f = np.asarray(f)
        return self._R @ f - self.holding * f

    def scaled(self, factor):
        """Elementwise r(x, y) * factor(x, y) with ``factor`` a dense array."""
        if self.is_sparse:
            rows, cols, vals = self.edges
            data = vals * np.asarray(factor)[rows, cols]
            return RateMatrix(sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n)),
                              self.space.labels)
        return RateMatrix(self._R * factor, self.space.labels)

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"RateMatrix(n={self.n}, {kind})"


def contract_array(F, rates):
    """sum_y F[..., x, y] r(x, y) for a pair array ``F``."""
    R = rates.matrix if isinstance(rates, RateMatrix) else rates
    F = np.asarray(F)
    if sp.issparse(R):
        idx, rate = rates.neighbors
        rows = np.arange(R.shape[0])[:, None]
        return (F[..., rows, idx] * rate).sum(axis=-1)
    return (F * R).sum(axis=-1)


def contract(alpha, r: RateMatrix, t=0.0, x=None, absolute=False):
    """Contraction  alpha_r(t, x) = sum_y alpha(t, x, y) r(x, y).

    ``alpha`` is a pair array or a :class:`Field` on pairs. Returns the
    whole vector over states, or its entry at ``x``.
    """
    A = alpha.at(t) if isinstance(alpha, Field) else np.asarray(alpha, dtype=float)
    if absolute:
        A = np.abs(A)
    out = contract_array(A, r)
    return out if x is None else float(out[x])


def stationary(r: RateMatrix, tol=1e-10):
    """Stationary distribution: pi L = 0, sum pi = 1, pi > 0."""
    if not r.irreducible:
        raise NotIrreducible("rate graph is not strongly connected")
    scale = float(np.max(r.holding))
    if r.n <= DIRECT_SOLVE_MAX:
        A = r.generator()
        A = A.toarray() if sp.issparse(A) else np.array(A)
        A = A.T / scale
        A[-1, :] = 1.0
        b = np.zeros(r.n)
        b[-1] = 1.0
        try:
            pi = scipy.linalg.solve(A, b)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolverFailure(f"stationary solve failed: {exc}") from exc
    else:
        pi = _power_stationary(r, tol)
    pi = pi / pi.sum()
    residual = float(np.max(np.abs(r.matrix.T @ pi - r.holding * pi))) / scale
    if not np.all(pi > 0.0) or residual > max(tol, 1e-12 * r.n):
        raise SolverFailure(f"stationary residual {residual:.3e} or nonpositive weight")
    pi.setflags(write=False)
    return pi


def _power_stationary(r, tol, max_iter=10_000_000):
    lam = 1.05 * float(np.max(r.holding))
    P = (sp.identity(r.n, format="csr") + r.generator() / lam).T.tocsr()
    pi = np.full(r.n, 1.0 / r.n)
    for it in range(max_iter):
        nxt = P @ pi
        if it % 16 == 0 and np.max(np.abs(nxt - pi)) < tol * 1e-2 / r.n:
            return nxt
        pi = nxt
    raise SolverFailure("power iteration for the stationary law did not converge")


def reverse(r: RateMatrix, pi) -> RateMatrix:
    """Time-reversed kernel r*(x, y) = pi(y) r(y, x) / pi(x)."""
    pi = np.asarray(pi, dtype=float)
    if r.is_sparse:
        R = r.matrix.T.tocsr()
        Rs = sp.diags(1.0 / pi) @ R @ sp.diags(pi)
        return RateMatrix(Rs.tocsr(), r.space.labels)
    Rs = r.matrix.T * pi[None, :] / pi[:, None]
    return RateMatrix(Rs, r.space.labels)


def psi(g, r: RateMatrix, rstar: RateMatrix, t=0.0):
    """psi_t(x) = sum_y [r*(x, y) g(t, y, x) - r(x, y) g(t, x, y)]."""
    G = g.at(t) if isinstance(g, Field) else np.asarray(g, dtype=float)
    return contract_array(np.swapaxes(G, -1, -2), rstar) - contract_array(G, r)


def psi_field(g: Field, r: RateMatrix, rstar: RateMatrix) -> Field:
    """The psi field as a space-time field over states."""
    return g.map_static(lambda G: contract_array(np.swapaxes(G, -1, -2), rstar)
                        - contract_array(G, r))


def inner(f, h, pi):
    """<f, h> = sum_x pi(x) conj(f(x)) h(x)."""
    return complex(np.sum(pi * np.conj(f) * h)) if (np.iscomplexobj(f) or np.iscomplexobj(h)) \
        else float(np.sum(pi * f * h))


class PerturbedKernel:
    """Rates r_t^lam(x, y) = r(x, y) exp(lam g(t, x, y))."""

    def __init__(self, base: RateMatrix, g: Perturbation, lam: float):
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.base = base
        self.g = g
        self.lam = float(lam)

    def at(self, s):
        """Dense rate matrix at time s."""
        R = self.base.dense()
        if self.lam == 0.0:
            return R
        return R * np.exp(self.lam * self.g.at(s))

    def holding(self, s):
        return self.at(s).sum(axis=1)

    def generator(self, s):
        R = self.at(s)
        return R - np.diag(R.sum(axis=1))

    @property
    def rate_bound(self):
        """State-local dominating rates r_hat(x) exp(lam ||g||)."""
        if self.lam == 0.0:
            return np.array(self.base.holding)
        return self.base.holding * np.exp(self.lam * self.g.bound)

    @property
    def is_time_homogeneous(self):
        return self.lam == 0.0 or self.g.is_static

    def frozen(self):
        """The homogeneous kernel r e^{lam g} for a time-independent g."""
        if not self.is_time_homogeneous:
            raise ValueError("perturbation is time dependent")
        if self.lam == 0.0:
            return self.base
        return self.base.scaled(np.exp(self.lam * self.g.static_value))


class StationaryChain:
    """A rate matrix together with its stationary law and reversal.

    Caches pi, r*, and the matrices of L and L* (dense or CSR).
    """

    def __init__(self, r: RateMatrix, pi=None):
        self.r = r
        self.pi = stationary(r) if pi is None else np.asarray(pi, dtype=float)
        self.rstar = reverse(r, self.pi)

    @property
    def n(self):
        return self.r.n

    @cached_property
    def Q(self):
        return self.r.generator()

    @cached_property
    def Qstar(self):
        return self.rstar.generator()

    def L(self, f):
        return self.Q @ f

    def Lstar(self, f):
        return self.Qstar @ f

    def psi(self, g, t=0.0):
        return psi(g, self.r, self.rstar, t)

    def psi_field(self, g):
        return psi_field(g, self.r, self.rstar)

    def mean(self, f):
        return np.asarray(f) @ self.pi

    def inner(self, f, h):
        return inner(f, h, self.pi)
