"""Adaptive Simpson and fixed Gauss-Legendre rules.

Integrands may return scalars or arrays (real or complex); the error
control uses the max-norm of the Richardson difference.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import SolverFailure

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def _norm(x):
    return float(np.max(np.abs(x))) if np.ndim(x) else abs(x)


def adaptive_simpson(f, a, b, tol=1e-10, rel=0.0, max_depth=50, max_evals=2_000_000,
                     full_output=False):
    """Integrate ``f`` over ``[a, b]`` by adaptive Simpson with Richardson correction.

    The target on each panel is ``max(tol, rel * |I|) * width / (b - a)``,
    where ``|I|`` is the running estimate of the whole integral.
    Returns the integral, or ``(integral, error_estimate, n_evals)`` when
    ``full_output`` is set.
    """
    a = float(a)
    b = float(b)
    if b == a:
        z = 0.0 * f(a)
        return (z, 0.0, 1) if full_output else z
    width = b - a
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    n_evals = 3
    whole = width / 6.0 * (fa + 4.0 * fm + fb)
    scale = _norm(whole)
    total = 0.0 * whole
    err_total = 0.0
    # Explicit stack: (left, right, f(left), f(mid), f(right), simpson, depth)
    stack = [(a, b, fa, fm, fb, whole, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s_whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm = f(lm)
        frm = f(rm)
        n_evals += 2
        h = hi - lo
        s_left = h / 12.0 * (flo + 4.0 * flm + fmid)
        s_right = h / 12.0 * (fmid + 4.0 * frm + fhi)
        diff = s_left + s_right - s_whole
        err = _norm(diff) / 15.0
        target = max(tol, rel * scale) * h / width
        if err <= target or depth >= max_depth:
            total = total + s_left + s_right + diff / 15.0
            err_total += err
            continue
        if n_evals > max_evals:
            raise SolverFailure(f"adaptive_simpson exceeded {max_evals} evaluations")
        stack.append((mid, hi, fmid, frm, fhi, s_right, depth + 1))
        stack.append((lo, mid, flo, flm, fmid, s_left, depth + 1))
        scale = max(scale, _norm(total))
    if full_output:
        return total, err_total, n_evals
    return total


def gauss_legendre(f_vec, a, b, panels=1):
    """Composite 12-point Gauss-Legendre rule.

    ``f_vec`` takes a 1-D array of abscissae and returns values along axis 0.
    Exact for polynomials of degree 23 on each panel.
    """
    if b <= a:
        return 0.0
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    centers = 0.5 * (edges[1:] + edges[:-1])
    s = (centers[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    vals = f_vec(s)
    return np.tensordot(w, vals, axes=(0, 0))


def panels_for(bandwidth, length):
    """Panel count so each panel spans at most one radian of the fastest mode."""
    if bandwidth <= 0.0:
        return 1
    return max(1, int(math.ceil(bandwidth * length)))
