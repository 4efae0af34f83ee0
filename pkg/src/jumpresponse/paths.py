"""Exact path sampling and path functionals.

Paths are sampled one at a time, each from its own random stream, and
stored together in an :class:`Ensemble` of flat arrays (jump times,
post-jump states, per-path offsets). Every functional is then evaluated
for all paths at once over the flattened constancy segments.
"""
from __future__ import annotations

import json
import math
import os
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from multiprocessing import get_context

import numpy as np

from .core import PerturbedKernel, RateMatrix
from .errors import TruncatedPath
from .fields import Field
from .quadrature import adaptive_simpson

DEFAULT_CAP = 1_000_000
_BLOCK = 64
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_CHUNK = 200_000  # quadrature nodes processed per vectorized batch


# ----------------------------------------------------------------------------
# random streams
# ----------------------------------------------------------------------------
class RngStream:
    """Uniform stream number ``stream`` of the experiment ``seed``.

    Streams partition the counter space of a single Philox key derived from
    ``seed``, so every (seed, stream) pair has its own reproducible sequence
    of 2**128 blocks regardless of which process draws it.
    """

    def __init__(self, seed, stream=0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._bitgen = np.random.Philox(key=_philox_key(self.seed),
                                        counter=np.array([0, 0, self.stream, 0], dtype=np.uint64))
        self.generator = np.random.Generator(self._bitgen)

    def uniforms(self, size=_BLOCK):
        return self.generator.random(size)


def _philox_key(seed):
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


class _StreamFactory:
    """Repositions one Philox generator at the start of each stream (cheap)."""

    def __init__(self, seed):
        self.seed = int(seed)
        self._key = _philox_key(seed)
        self._bitgen = np.random.Philox(key=self._key)
        self.generator = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def open(self, stream):
        st = self._state
        st["state"]["counter"] = np.array([0, 0, stream, 0], dtype=np.uint64)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        self._bitgen.state = st
        return self.generator


# ----------------------------------------------------------------------------
# trajectories
# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class Trajectory:
    """A single path on [0, t]: initial state, jump times and post-jump states."""

    t: float
    x0: int
    times: np.ndarray
    states: np.ndarray
    truncated: bool = False
    seed: int | None = None
    stream: int | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=np.int64)
        if len(times) != len(states):
            raise ValueError("times and states differ in length")
        if len(times) and (np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] > self.t):
            raise ValueError("jump times must increase strictly inside (0, t]")
        prev = np.concatenate([[self.x0], states[:-1]])
        if np.any(prev == states):
            raise ValueError("consecutive states must differ")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def n_jumps(self):
        return len(self.times)

    def state_at(self, s):
        k = int(np.searchsorted(self.times, s, side="right"))
        return int(self.x0 if k == 0 else self.states[k - 1])

    @property
    def final_state(self):
        return int(self.states[-1]) if len(self.states) else int(self.x0)


@dataclass
class Ensemble:
    """Many paths on a common horizon, stored as flat arrays.

    Path ``p`` owns jumps ``offsets[p]:offsets[p+1]`` and was drawn from
    stream ``first_stream + p``.
    """

    t: float
    x0: np.ndarray
    offsets: np.ndarray
    jump_times: np.ndarray
    jump_states: np.ndarray
    truncated: np.ndarray
    seed: int | None = None
    first_stream: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_trajectories(cls, trajs):
        trajs = list(trajs)
        t = trajs[0].t
        if any(tr.t != t for tr in trajs):
            raise ValueError("trajectories must share the horizon")
        counts = [tr.n_jumps for tr in trajs]
        return cls(
            t=float(t),
            x0=np.array([tr.x0 for tr in trajs], dtype=np.int64),
            offsets=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
            jump_times=np.concatenate([tr.times for tr in trajs]) if trajs else np.zeros(0),
            jump_states=np.concatenate([tr.states for tr in trajs]).astype(np.int64),
            truncated=np.array([tr.truncated for tr in trajs], dtype=bool),
            seed=trajs[0].seed,
            first_stream=trajs[0].stream or 0,
        )

    def __len__(self):
        return len(self.x0)

    def __getitem__(self, p):
        lo, hi = self.offsets[p], self.offsets[p + 1]
        return Trajectory(self.t, int(self.x0[p]), self.jump_times[lo:hi], self.jump_states[lo:hi],
                          bool(self.truncated[p]), self.seed, self.first_stream + p)

    @property
    def n_paths(self):
        return len(self.x0)

    @property
    def n_jumps(self):
        return np.diff(self.offsets)

    @cached_property
    def jump_path(self):
        return np.repeat(np.arange(self.n_paths), self.n_jumps)

    @cached_property
    def jump_from(self):
        prev = np.empty_like(self.jump_states)
        if len(prev):
            prev[1:] = self.jump_states[:-1]
            firsts = self.offsets[:-1][self.n_jumps > 0]
            prev[firsts] = self.x0[self.n_jumps > 0]
        return prev

    @cached_property
    def final_state(self):
        out = self.x0.copy()
        has = self.n_jumps > 0
        out[has] = self.jump_states[self.offsets[1:][has] - 1]
        return out

    @cached_property
    def segments(self):
        """Constancy segments ``(path, state, start, end, is_first)``."""
        n = self.n_paths
        total = len(self.jump_times) + n
        seg_off = self.offsets + np.arange(n + 1)
        first = np.zeros(total, dtype=bool)
        first[seg_off[:-1]] = True
        last = np.zeros(total, dtype=bool)
        last[seg_off[1:] - 1] = True
        path = np.repeat(np.arange(n), self.n_jumps + 1)
        state = np.empty(total, dtype=np.int64)
        state[first] = self.x0
        state[~first] = self.jump_states
        start = np.zeros(total)
        start[~first] = self.jump_times
        end = np.empty(total)
        end[~last] = self.jump_times
        end[last] = self.t
        # a truncated path stops at its last recorded jump
        end[last & self.truncated[path]] = start[last & self.truncated[path]]
        return _Segments(path, state, start, end, first, seg_off)

    def restrict(self, s):
        """The same paths observed on [0, s] for s <= t."""
        if not 0 < s <= self.t:
            raise ValueError("restriction time must lie in (0, t]")
        keep = self.jump_times <= s
        counts = np.bincount(self.jump_path[keep], minlength=self.n_paths)
        cut_trunc = self.truncated & (counts == self.n_jumps)
        return Ensemble(float(s), self.x0, np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
                        self.jump_times[keep], self.jump_states[keep], cut_trunc, self.seed,
                        self.first_stream)

    def path_sum(self, values, where="segments"):
        idx = self.segments.path if where == "segments" else self.jump_path
        return np.bincount(idx, weights=values, minlength=self.n_paths)

    def check_untruncated(self):
        if np.any(self.truncated):
            raise TruncatedPath(f"{int(self.truncated.sum())} path(s) hit the jump cap")

    def dump_jsonl(self, path, values=None):
        """Write one JSON record per path (seed, stream, jump times, states, values)."""
        with open(path, "w") as fh:
            for p in range(self.n_paths):
                tr = self[p]
                rec = {"seed": self.seed, "stream": tr.stream, "x0": tr.x0,
                       "times": tr.times.tolist(), "states": tr.states.tolist(),
                       "truncated": tr.truncated}
                if values is not None:
                    rec["values"] = {k: float(v[p]) for k, v in values.items()}
                fh.write(json.dumps(rec) + "\n")


@dataclass(frozen=True)
class _Segments:
    path: np.ndarray
    state: np.ndarray
    start: np.ndarray
    end: np.ndarray
    first: np.ndarray
    offsets: np.ndarray


# ----------------------------------------------------------------------------
# samplers
# ----------------------------------------------------------------------------
def _initial_table(nu, n):
    if isinstance(nu, (int, np.integer)):
        w = np.zeros(n)
        w[int(nu)] = 1.0
    else:
        w = np.asarray(nu, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("initial distribution must be a nonnegative vector over states")
    return np.cumsum(w / w.sum()).tolist()


class _Sampler:
    """Per-state jump tables shared by the homogeneous and thinning samplers."""

    def __init__(self, kernel):
        if isinstance(kernel, RateMatrix):
            kernel = PerturbedKernel(kernel, None, 0.0)
        base = kernel.base
        idx, rate = base.neighbors
        self.n = base.n
        self.lam = kernel.lam
        self.homogeneous = kernel.lam == 0.0 or kernel.g.is_static
        if self.homogeneous:
            r = kernel.frozen() if kernel.lam else base
            idx, rate = r.neighbors
            self.hold = r.holding.tolist()
            self.cum = [np.cumsum(rate[x][rate[x] > 0]).tolist() for x in range(self.n)]
            self.tgt = [idx[x][rate[x] > 0].tolist() for x in range(self.n)]
        else:
            g = kernel.g
            self.bound = (base.holding * math.exp(self.lam * g.bound)).tolist()
            self.idx = idx
            self.rate = rate
            rows = np.arange(self.n)[:, None]
            if g.func is None:
                self.profiles = [p for p, _ in g.terms]
                self.term_vals = np.stack([F[rows, idx] for _, F in g.terms])
                self.g_callable = None
            else:
                self.g_callable = g
            self._rows = rows

    def _row_rates(self, s, x):
        if self.g_callable is None:
            tau = np.array([p(s) for p in self.profiles])
            gv = tau @ self.term_vals[:, x, :]
        else:
            gv = self.g_callable.at(s)[x, self.idx[x]]
        return self.rate[x] * np.exp(self.lam * gv)

    def path(self, gen, nu_cum, t, cap):
        buf = gen.random(_BLOCK).tolist()
        x0 = bisect_right(nu_cum, buf[0] * nu_cum[-1])
        x0 = min(x0, self.n - 1)
        k = 1
        x = x0
        times = []
        states = []
        s = 0.0
        truncated = False
        log1p = math.log1p
        if self.homogeneous:
            hold, cum, tgt = self.hold, self.cum, self.tgt
            while True:
                if k >= _BLOCK - 1:
                    buf = gen.random(_BLOCK).tolist()
                    k = 0
                s -= log1p(-buf[k]) / hold[x]
                if s > t:
                    break
                if len(times) >= cap:
                    truncated = True
                    break
                row = cum[x]
                x = tgt[x][bisect_right(row, buf[k + 1] * row[-1])]
                k += 2
                times.append(s)
                states.append(x)
        else:
            bound = self.bound
            while True:
                if k >= _BLOCK - 1:
                    buf = gen.random(_BLOCK).tolist()
                    k = 0
                s -= log1p(-buf[k]) / bound[x]
                if s > t:
                    break
                level = buf[k + 1] * bound[x]
                k += 2
                w = np.cumsum(self._row_rates(s, x))
                if level >= w[-1]:
                    continue
                if len(times) >= cap:
                    truncated = True
                    break
                x = int(self.idx[x][np.searchsorted(w, level, side="right")])
                times.append(s)
                states.append(x)
        return x0, times, states, truncated


_JOB = None


def _run_range(lo, hi):
    sampler, nu_cum, t, cap, seed = _JOB
    return _simulate_range(sampler, nu_cum, t, cap, seed, lo, hi)


def _simulate_range(sampler, nu_cum, t, cap, seed, lo, hi):
    streams = _StreamFactory(seed)
    x0 = np.empty(hi - lo, dtype=np.int64)
    counts = np.empty(hi - lo, dtype=np.int64)
    trunc = np.zeros(hi - lo, dtype=bool)
    all_t, all_s = [], []
    for i, stream in enumerate(range(lo, hi)):
        a, times, states, tr = sampler.path(streams.open(stream), nu_cum, t, cap)
        x0[i] = a
        counts[i] = len(times)
        trunc[i] = tr
        all_t.extend(times)
        all_s.extend(states)
    return x0, counts, np.array(all_t, dtype=float), np.array(all_s, dtype=np.int64), trunc


def default_workers():
    return max(1, int(os.environ.get("JUMPRESPONSE_WORKERS", "1")))


def simulate_ensemble(kernel, nu, t, n, seed, cap=DEFAULT_CAP, workers=None, first_stream=0):
    """Sample ``n`` independent paths on [0, t].

    Parameters
    ----------
    kernel : RateMatrix or PerturbedKernel
        Homogeneous kernels use the Gillespie sampler; time-dependent
        perturbations use thinning against ``r_hat(x) exp(lam ||g||)``.
    nu : int or array_like
        Initial state or initial distribution.
    seed : int
        Path ``p`` uses stream ``first_stream + p`` of this seed, so results
        do not depend on ``workers``.
    """
    global _JOB
    if t <= 0:
        raise ValueError("horizon must be positive")
    if cap < 1:
        raise ValueError("jump cap must be at least 1")
    sampler = _Sampler(kernel)
    nu_cum = _initial_table(nu, sampler.n)
    workers = default_workers() if workers is None else int(workers)
    lo, hi = first_stream, first_stream + int(n)
    if workers <= 1 or n < 2 * workers:
        parts = [_simulate_range(sampler, nu_cum, float(t), cap, seed, lo, hi)]
    else:
        bounds = np.linspace(lo, hi, workers + 1).astype(int)
        _JOB = (sampler, nu_cum, float(t), cap, seed)
        try:
            with ProcessPoolExecutor(workers, mp_context=get_context("fork")) as pool:
                futs = [pool.submit(_run_range, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
                parts = [f.result() for f in futs]
        finally:
            _JOB = None
    x0 = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    return Ensemble(
        t=float(t), x0=x0, offsets=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
        jump_times=np.concatenate([p[2] for p in parts]),
        jump_states=np.concatenate([p[3] for p in parts]),
        truncated=np.concatenate([p[4] for p in parts]), seed=int(seed), first_stream=lo,
    )


def simulate_homogeneous(r: RateMatrix, nu, t, cap=DEFAULT_CAP, rng: RngStream | None = None):
    """One Gillespie path of the kernel ``r``."""
    rng = rng or RngStream(0, 0)
    sampler = _Sampler(r)
    x0, times, states, tr = sampler.path(rng.generator, _initial_table(nu, r.n), float(t), cap)
    return Trajectory(float(t), x0, times, states, tr, rng.seed, rng.stream)


def simulate_inhomogeneous(rk: PerturbedKernel, nu, t, cap=DEFAULT_CAP, rng: RngStream | None = None):
    """One path of the perturbed kernel, sampled exactly by thinning."""
    rng = rng or RngStream(0, 0)
    sampler = _Sampler(rk)
    x0, times, states, tr = sampler.path(rng.generator, _initial_table(nu, rk.base.n), float(t), cap)
    return Trajectory(float(t), x0, times, states, tr, rng.seed, rng.stream)


# ----------------------------------------------------------------------------
# functional specifications
# ----------------------------------------------------------------------------
def _as_field(f):
    return f if isinstance(f, Field) else Field.static(f)


class FunctionalSpec:
    """Base class of additive path functionals."""


@dataclass(frozen=True)
class TerminalObservable(FunctionalSpec):
    """F = v(X_t)."""
    v: object

    @property
    def field(self):
        return _as_field(self.v)


@dataclass(frozen=True)
class TimeIntegral(FunctionalSpec):
    """F = int_0^t v(s, X_s) ds."""
    v: object

    @property
    def field(self):
        return _as_field(self.v)


@dataclass(frozen=True)
class JumpSum(FunctionalSpec):
    """F = sum over jumps of alpha(s, X_{s-}, X_s)."""
    alpha: object

    @property
    def field(self):
        return _as_field(self.alpha)


# ----------------------------------------------------------------------------
# vectorized evaluation over an ensemble
# ----------------------------------------------------------------------------
def segment_integrals(ens: Ensemble, f: Field):
    """Per-segment  int_a^b f(s, x) ds  for a field ``f`` over states."""
    seg = ens.segments
    if f.func is None:
        out = np.zeros(len(seg.state))
        for p, F in f.terms:
            out += F[seg.state] * p.integral(seg.start, seg.end)
        return out
    return np.array([adaptive_simpson(lambda s, x=x: f.at(s)[x], a, b, 1e-13, 1e-10)
                     for x, a, b in zip(seg.state, seg.start, seg.end)])


def _segment_integral2(ens, f):
    """Per-segment  int_a^b (b - u) f(u, x) du."""
    seg = ens.segments
    if f.func is None:
        out = np.zeros(len(seg.state))
        for p, F in f.terms:
            out += F[seg.state] * p.integral2(seg.start, seg.end)
        return out
    return np.array([adaptive_simpson(lambda u, x=x, b=b: (b - u) * f.at(u)[x], a, b, 1e-13, 1e-10)
                     for x, a, b in zip(seg.state, seg.start, seg.end)])


def jump_values(ens: Ensemble, alpha: Field):
    """alpha(t_i, x_{i-1}, x_i) at every jump."""
    jf, jt, ts = ens.jump_from, ens.jump_states, ens.jump_times
    if alpha.func is None:
        out = np.zeros(len(ts))
        for p, F in alpha.terms:
            out += F[jf, jt] * (p(ts) if not p.is_constant else p.value)
        return out
    if alpha.pointwise is not None:
        p, E, fn = alpha.pointwise
        return fn(p(ts) if not p.is_constant else np.full(len(ts), p.value), E[jf, jt])
    return np.array([alpha.at(s)[a, b] for s, a, b in zip(ts, jf, jt)])


def _state_values(ens, f, times, states):
    if f.func is None:
        out = np.zeros(len(times))
        for p, F in f.terms:
            out += F[states] * (p(times) if not p.is_constant else p.value)
        return out
    return np.array([f.at(s)[x] for s, x in zip(times, states)])


def _mask_truncated(ens, values):
    if np.any(ens.truncated):
        values = np.array(values, dtype=float)
        values[ens.truncated] = np.nan
    return values


def eval_functional_ensemble(ens: Ensemble, spec: FunctionalSpec):
    """Values of ``spec`` on every path (NaN on truncated paths)."""
    f = spec.field
    if isinstance(spec, TerminalObservable):
        vals = _state_values(ens, f, np.full(ens.n_paths, ens.t), ens.final_state)
    elif isinstance(spec, TimeIntegral):
        vals = ens.path_sum(segment_integrals(ens, f))
    elif isinstance(spec, JumpSum):
        vals = ens.path_sum(jump_values(ens, f), where="jumps")
    else:
        raise TypeError(f"unknown functional {spec!r}")
    return _mask_truncated(ens, vals)


def _segment_G(ens, g, r):
    """Per-segment compensator increments and G at each segment start."""
    seg = ens.segments
    comp = segment_integrals(ens, g.contract(r))
    entering = np.zeros(len(seg.state))
    entering[~seg.first] = jump_values(ens, g)
    d = entering - comp
    cs = np.cumsum(d)
    base = (cs - d)[seg.offsets[:-1]]
    G_end = cs - np.repeat(base, np.diff(seg.offsets))
    return comp, G_end + comp


def eval_G_ensemble(ens: Ensemble, g: Field, r: RateMatrix):
    """Martingale G_t on every path."""
    seg = ens.segments
    comp = segment_integrals(ens, g.contract(r))
    vals = ens.path_sum(jump_values(ens, g), "jumps") - np.bincount(seg.path, comp, ens.n_paths)
    return _mask_truncated(ens, vals)


def eval_quadratic_compensator(ens: Ensemble, g: Field, r: RateMatrix):
    """int_0^t (g^2)_r(s, X_s) ds on every path."""
    return _mask_truncated(ens, ens.path_sum(segment_integrals(ens, (g * g).contract(r))))


def eval_time_integral_G(ens: Ensemble, v: Field, g: Field, r: RateMatrix):
    """int_0^t v(s, X_s) G_s ds on every path, with G the running martingale."""
    seg = ens.segments
    gr = g.contract(r)
    _, G_start = _segment_G(ens, g, r)
    first = G_start * segment_integrals(ens, v)
    if v.is_static:
        vx = v.static_value[seg.state]
        second = vx * _segment_integral2(ens, gr)
    elif v.func is None and gr.func is None:
        second = _nested_separable(seg, v, gr)
    else:
        second = np.array([
            adaptive_simpson(lambda s, x=x, a=a: v.at(s)[x] * adaptive_simpson(
                lambda u: gr.at(u)[x], a, s, 1e-13, 1e-10), a, b, 1e-12, 1e-10)
            for x, a, b in zip(seg.state, seg.start, seg.end)])
    return _mask_truncated(ens, ens.path_sum(first - second))


def _nested_separable(seg, v, gr):
    """Per-segment  int_a^b v(s, x) int_a^s gr(u, x) du ds  for separable fields."""
    out = np.zeros(len(seg.state))
    bw = v.bandwidth + gr.bandwidth
    for groups, nodes, weights in _gl_groups(seg.start, seg.end, bw):
        a = seg.start[groups][:, None]
        x = seg.state[groups]
        acc = np.zeros(nodes.shape)
        for pv, V in v.terms:
            tv = pv(nodes) if not pv.is_constant else pv.value
            inner = np.zeros(nodes.shape)
            for pg, Gr in gr.terms:
                inner += Gr[x][:, None] * pg.integral(np.broadcast_to(a, nodes.shape), nodes)
            acc += V[x][:, None] * tv * inner
        out[groups] = (acc * weights).sum(axis=1)
    return out


def _gl_groups(start, end, bandwidth):
    """Gauss-Legendre nodes per segment, grouped by panel count."""
    lengths = end - start
    panels = np.maximum(1, np.ceil(bandwidth * lengths)).astype(int) if bandwidth > 0 \
        else np.ones(len(start), dtype=int)
    for P in np.unique(panels):
        idx_all = np.flatnonzero(panels == P)
        per = max(1, _CHUNK // (12 * P))
        for c in range(0, len(idx_all), per):
            idx = idx_all[c:c + per]
            a = start[idx]
            h = (end[idx] - a) / P
            k = np.arange(P)
            centers = a[:, None] + h[:, None] * (k[None, :] + 0.5)
            nodes = (centers[:, :, None] + 0.5 * h[:, None, None] * _GL_NODES[None, None, :])
            weights = np.broadcast_to(0.5 * h[:, None, None] * _GL_WEIGHTS[None, None, :], nodes.shape)
            yield idx, nodes.reshape(len(idx), -1), weights.reshape(len(idx), -1)


def _split_at_zeros(start, end, p):
    """Cut segments at the zeros of a profile with a zero lattice.

    Returns ``(owner, a, b)``: the index of the parent segment of each piece
    and the piece limits. Profiles without a zero lattice are not cut.
    """
    lattice = getattr(p, "zero_lattice", None)
    if lattice is None:
        return np.arange(len(start)), start, end
    s0, h = lattice()
    m_lo = np.floor((start - s0) / h).astype(np.int64) + 1
    m_hi = np.ceil((end - s0) / h).astype(np.int64) - 1
    cuts = np.maximum(m_hi - m_lo + 1, 0)
    owner = np.repeat(np.arange(len(start)), cuts + 1)
    first = np.concatenate([[0], np.cumsum(cuts + 1)[:-1]])
    rank = np.arange(len(owner)) - np.repeat(first, cuts + 1)
    # piece j of a segment runs from zero j - 1 to zero j (segment ends at the extremes)
    lo = np.where(rank == 0, start[owner], s0 + (m_lo[owner] + rank - 1) * h)
    hi = np.where(rank == cuts[owner], end[owner], s0 + (m_lo[owner] + rank) * h)
    return owner, lo, hi


def eval_action_ensemble(ens: Ensemble, g: Field, lam: float, r: RateMatrix):
    """Girsanov action on every path.

    A = int_0^t sum_y r(X_s, y) (exp(lam g(s, X_s, y)) - 1) ds - lam sum_jumps g.
    """
    if lam == 0.0:
        return _mask_truncated(ens, np.zeros(ens.n_paths))
    seg = ens.segments
    jumps = ens.path_sum(jump_values(ens, g), "jumps")
    idx, rate = r.neighbors
    rows = np.arange(r.n)[:, None]
    if g.is_static:
        G = g.static_value
        h = (rate * np.expm1(lam * G[rows, idx])).sum(axis=1)
        comp = h[seg.state] * (seg.end - seg.start)
    elif g.func is None:
        comp = np.zeros(len(seg.state))
        term_vals = [(p, F[rows, idx]) for p, F in g.terms]
        for groups, nodes, weights in _gl_groups(seg.start, seg.end, lam * g.bound + g.bandwidth):
            x = seg.state[groups]
            expo = np.zeros(nodes.shape + (idx.shape[1],))
            for p, Fn in term_vals:
                tv = p(nodes) if not p.is_constant else np.full(nodes.shape, p.value)
                expo += tv[..., None] * Fn[x][:, None, :]
            vals = (rate[x][:, None, :] * np.expm1(lam * expo)).sum(axis=-1)
            comp[groups] = (vals * weights).sum(axis=1)
    elif g.pointwise is not None:
        # the values may have kinks where the profile vanishes: integrate piecewise
        p, E, fn = g.pointwise
        En = E[rows, idx]
        owner, lo, hi = _split_at_zeros(seg.start, seg.end, p)
        states = seg.state[owner]
        piece = np.zeros(len(owner))
        for groups, nodes, weights in _gl_groups(lo, hi, lam * g.bound + g.bandwidth):
            x = states[groups]
            tv = p(nodes) if not p.is_constant else np.full(nodes.shape, p.value)
            expo = fn(tv[..., None], En[x][:, None, :])
            vals = (rate[x][:, None, :] * np.expm1(lam * expo)).sum(axis=-1)
            piece[groups] = (vals * weights).sum(axis=1)
        comp = np.bincount(owner, piece, len(seg.state))
    else:
        R = r.dense()
        comp = np.array([
            adaptive_simpson(lambda s, x=x: float(R[x] @ np.expm1(lam * g.at(s)[x])), a, b, 1e-13, 1e-10)
            for x, a, b in zip(seg.state, seg.start, seg.end)])
    vals = np.bincount(seg.path, comp, ens.n_paths) - lam * jumps
    return _mask_truncated(ens, vals)


def eval_exp_martingale_ensemble(ens: Ensemble, F: Field, r: RateMatrix):
    """exp{ sum_jumps F - int_0^t sum_y r(X_s, y)(e^F - 1) ds } on every path."""
    return np.exp(-eval_action_ensemble(ens, F, 1.0, r))


def log1p_field(alpha: Field, delta: float):
    """The field ln(1 + delta |alpha|) for a static or callable alpha."""
    if alpha.is_static:
        return Field.static(np.log1p(delta * np.abs(alpha.static_value)))
    if alpha.func is None and len(alpha.terms) == 1:
        p, E = alpha.terms[0]

        def fn(tau, e):
            return np.log1p(delta * np.abs(tau * e))
        out = Field(func=lambda s: fn(p(s), E), bound=math.log1p(delta * alpha.bound),
                    period=alpha.period, bandwidth=max(alpha.bandwidth, 1.0))
        out.pointwise = (p, E, fn)
        return out
    return Field(func=lambda s: np.log1p(delta * np.abs(alpha.at(s))),
                 bound=math.log1p(delta * alpha.bound), period=alpha.period,
                 bandwidth=max(alpha.bandwidth, 1.0))


# ----------------------------------------------------------------------------
# single-path wrappers
# ----------------------------------------------------------------------------
def _single(traj):
    if traj.truncated:
        raise TruncatedPath("functional requested on a truncated path")
    return Ensemble.from_trajectories([traj])


def eval_functional(traj: Trajectory, spec: FunctionalSpec) -> float:
    return float(eval_functional_ensemble(_single(traj), spec)[0])


def eval_G(traj: Trajectory, g: Field, r: RateMatrix) -> float:
    return float(eval_G_ensemble(_single(traj), g, r)[0])


def eval_action(traj: Trajectory, g: Field, lam: float, r: RateMatrix) -> float:
    return float(eval_action_ensemble(_single(traj), g, lam, r)[0])


def eval_exp_martingale(traj: Trajectory, F: Field, r: RateMatrix) -> float:
    return float(eval_exp_martingale_ensemble(_single(traj), F, r)[0])
