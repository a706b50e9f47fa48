"""Independent ground-truth computations used to validate the grid solvers.

The 1D first-order effective Hamiltonian of c1 |q|^gamma - V(x) with a
periodic potential has a classical closed form: flat value -min V on the
flat spot, and otherwise the unique c with

    integral_0^1 ((V(x) + c) / c1)^(1/gamma) dx = |p|.

These routines use only quadrature, bisection and golden-section search,
independent of any finite-difference machinery.
"""

from __future__ import annotations

import math

import numpy as np

from .environment import EnvironmentSample, eval_potential

__all__ = [
    "hbar_1d_first_order",
    "hbar_flat_spot_value",
    "fbar_linear_1d",
    "brute_force_min",
    "flat_spot_halfwidth",
]

_GL_X = np.array([
    -0.9061798459386640, -0.5384693101056831, 0.0,
    0.5384693101056831, 0.9061798459386640,
])
_GL_W = np.array([
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891,
])

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(fn, lo: float, hi: float, tol: float = 1e-12):
    """Golden-section minimizer on [lo, hi]."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def _quad_nodes(period: float, n_panels: int):
    edges = np.linspace(0.0, period, n_panels + 1)
    halves = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    xs = (mids[:, None] + halves[:, None] * _GL_X[None, :]).ravel()
    ws = (halves[:, None] * _GL_W[None, :]).ravel()
    return xs, ws


def _min_periodic(V, period: float, n_seeds: int) -> float:
    """Global minimum of a periodic scalar function: coarse grid followed by
    golden-section refinement around the best few seeds."""
    xs = np.linspace(0.0, period, n_seeds, endpoint=False)
    vals = np.array([V(x) for x in xs])
    order = np.argsort(vals)[: max(3, n_seeds // 64)]
    h = period / n_seeds
    best = float(vals.min())
    for i in order:
        x0 = xs[i]
        _, v = _golden_min(V, x0 - h, x0 + h)
        best = min(best, v)
    return best


def hbar_1d_first_order(V, c1: float, gamma: float, p: float,
                        quad_N: int = 256, period: float = 1.0) -> float:
    """Effective Hamiltonian of c1 |q|^gamma - V(x), A = 0, V periodic.

    Returns the flat value -min V when |p| <= g(-min V), otherwise the
    unique c >= -min V with g(c) = |p|, where
    g(c) = (1/period) * integral ((V + c)/c1)^(1/gamma).
    """
    if quad_N < 256:
        raise ValueError("quad_N must be >= 256")
    c_flat = -_min_periodic(V, period, quad_N)
    xs, ws = _quad_nodes(period, quad_N)
    Vx = np.array([V(x) for x in xs])

    def g(c: float) -> float:
        integrand = np.maximum(Vx + c, 0.0) / c1
        return float(np.dot(ws, integrand ** (1.0 / gamma))) / period

    target = abs(p)
    if target <= g(c_flat):
        return c_flat
    lo, hi = c_flat, c_flat + max(1.0, c1 * target ** gamma + 1.0)
    while g(hi) < target:
        hi += (hi - lo) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    return 0.5 * (lo + hi)


def flat_spot_halfwidth(V, c1: float, gamma: float, quad_N: int = 256,
                        period: float = 1.0) -> float:
    """g(c_flat): the momentum |p| below which the 1D effective Hamiltonian
    is flat."""
    c_flat = -_min_periodic(V, period, quad_N)
    xs, ws = _quad_nodes(period, quad_N)
    Vx = np.array([V(x) for x in xs])
    integrand = np.maximum(Vx + c_flat, 0.0) / c1
    return float(np.dot(ws, integrand ** (1.0 / gamma))) / period


def hbar_flat_spot_value(env: EnvironmentSample, box: float,
                         grid_N: int = 1024) -> tuple[float, float]:
    """Flat-spot value of the first-order family over a finite box.

    Returns (-min V, min V): both sign conventions, so the classical
    value -min V and the raw minimum can be compared directly.
    """
    if env.dimension == 1:
        def V(x):
            return eval_potential(env, (x,))
        raw = _min_periodic(V, box, grid_N)
    else:
        xs = np.linspace(0.0, box, grid_N, endpoint=False)
        raw = math.inf
        for x in xs:
            for y in xs:
                raw = min(raw, eval_potential(env, (x, y)))
    return -raw, raw


def fbar_linear_1d(a, f, P: float, quad_N: int = 256,
                   period: float = 1.0) -> float:
    """Effective constant of F(X, x) = -a(x) X + f(x) in 1D:
    (mean(f/a) - P) / mean(1/a)."""
    xs, ws = _quad_nodes(period, quad_N)
    av = np.array([a(x) for x in xs])
    fv = np.array([f(x) for x in xs])
    mean_fa = float(np.dot(ws, fv / av)) / period
    mean_ia = float(np.dot(ws, 1.0 / av)) / period
    return (mean_fa - P) / mean_ia


def brute_force_min(fn, box, N: int = 256):
    """Grid minimum over [0, box]^d followed by golden-section refinement
    in the winning cell (axis by axis for d = 2). Returns (value, point)."""
    if N < 2:
        raise ValueError("N must be >= 2")
    box = np.atleast_1d(np.asarray(box, dtype=float))
    d = box.size
    if d == 1:
        xs = np.linspace(0.0, box[0], N)
        vals = np.array([fn(x) for x in xs])
        i = int(np.argmin(vals))
        h = box[0] / (N - 1)
        lo, hi = max(0.0, xs[i] - h), min(box[0], xs[i] + h)
        x, v = _golden_min(fn, lo, hi)
        if v <= vals[i]:
            return v, np.array([x])
        return float(vals[i]), np.array([xs[i]])
    xs = np.linspace(0.0, box[0], N)
    ys = np.linspace(0.0, box[1], N)
    grid = np.array([[fn(np.array([x, y])) for y in ys] for x in xs])
    i, j = np.unravel_index(int(np.argmin(grid)), grid.shape)
    hx, hy = box[0] / (N - 1), box[1] / (N - 1)
    px, py = xs[i], ys[j]
    best = float(grid[i, j])
    for _ in range(6):  # coordinate descent with golden section
        px, _ = _golden_min(lambda x: fn(np.array([x, py])),
                            max(0.0, px - hx), min(box[0], px + hx))
        py, v = _golden_min(lambda y: fn(np.array([px, y])),
                            max(0.0, py - hy), min(box[1], py + hy))
        best = min(best, v)
    return best, np.array([px, py])
