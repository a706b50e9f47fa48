"""Ergodic constants for fully nonlinear uniformly elliptic operators.

Three routes:

* an exact 1D inverse-integral oracle that only uses the strict
  monotonicity of F in its matrix argument,
* the resolvent problem v + F(D^2 v + P, Lx) = 0 on the unit cell,
* periodic-cell constants via Howard (policy) iteration on a monotone
  (wide-stencil) discretization; 2D cross terms need diagonally dominant
  coefficient matrices and a square grid.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hjb_solver import (
    ErgodicEstimate,
    GridField,
    NonConvergenceError,
    SolverParams,
    TorusGrid,
    corrector_lipschitz,
)
from .model import EllipticSpec, control_coefficients, eval_F
from .periodize import PeriodizedElliptic

__all__ = [
    "ergodic_constant_1d_exact",
    "solve_resolvent",
    "ergodic_constant_periodic_elliptic",
]

_GL_X = np.array([
    -0.9061798459386640, -0.5384693101056831, 0.0,
    0.5384693101056831, 0.9061798459386640,
])
_GL_W = np.array([
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891,
])


def _eval_any_F(spec, X, x) -> float:
    if isinstance(spec, PeriodizedElliptic):
        return spec.eval_F(X, x)
    return eval_F(spec, X, x)


def _spec_constants(spec):
    return spec.base.constants if isinstance(spec, PeriodizedElliptic) else spec.constants


def ergodic_constant_1d_exact(spec, P: float, quadrature_N: int = 256,
                              period: float = 1.0) -> float:
    """Exact 1D constant: the unique c with mean-zero chi'' where
    F(chi'' + P, x) = c, found by nested bisection.

    The inner inversion brackets chi'' through the two-sided ellipticity
    bound; the outer equation integral_0^period chi''(c, x) dx = 0 is
    monotone decreasing in c.  Composite 5-point Gauss quadrature on
    ``quadrature_N`` panels.
    """
    cst = _spec_constants(spec)
    lam = cst.lambda_bar
    edges = np.linspace(0.0, period, quadrature_N + 1)
    halves = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    xs = (mids[:, None] + halves[:, None] * _GL_X[None, :]).ravel()
    ws = (halves[:, None] * _GL_W[None, :]).ravel()
    # per-node control coefficients, sampled once so the bisections below
    # evaluate F as a vectorized max of affine functions of G (the same
    # formula _eval_any_F computes one point at a time)
    if isinstance(spec, PeriodizedElliptic):
        per_point = [spec.blended_controls([x]) for x in xs]
    else:
        per_point = [control_coefficients(spec, [x]) for x in xs]
    amat = np.array([[float(ctl[0][0, 0]) for ctl in pc] for pc in per_point])
    fvec = np.array([[float(ctl[1]) for ctl in pc] for pc in per_point])

    def F_of(G: np.ndarray) -> np.ndarray:
        return np.max(-amat * (G + P)[:, None] - fvec, axis=1)

    FP = F_of(np.zeros_like(xs))

    def invert_all(c: float) -> np.ndarray:
        # solve F(G + P, x_i) = c for G at every node; F strictly
        # decreasing in G with slope at least lambda_bar
        span = 2.0 * (np.abs(FP - c) / lam + 1e-9)
        lo, hi = -span, span
        if np.any(F_of(lo) < c) or np.any(F_of(hi) > c):
            raise NonConvergenceError("ellipticity bracket failure")
        tol = 1e-12 * max(1.0, float(span.max()))
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            pos = F_of(mid) >= c
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
            if float(np.max(hi - lo)) < tol:
                break
        return 0.5 * (lo + hi)

    def mean_G(c: float) -> float:
        return float(np.dot(ws, invert_all(c))) / period

    c_lo = float(FP.min()) - 1.0
    c_hi = float(FP.max()) + 1.0
    while mean_G(c_lo) < 0:
        c_lo -= max(1.0, c_hi - c_lo)
    while mean_G(c_hi) > 0:
        c_hi += max(1.0, c_hi - c_lo)
    for _ in range(80):
        c_mid = 0.5 * (c_lo + c_hi)
        if mean_G(c_mid) >= 0:
            c_lo = c_mid
        else:
            c_hi = c_mid
        if c_hi - c_lo < 1e-12 * max(1.0, abs(c_lo) + abs(c_hi)):
            break
    return 0.5 * (c_lo + c_hi)


# --- monotone discretization ---------------------------------------------

def _controls_on_grid(spec, grid: TorusGrid, coord_scale: float = 1.0):
    """Per-control coefficient arrays sampled at coord_scale * node."""
    d = grid.dimension
    axes = grid.axes()
    if d == 1:
        pts = axes[0][:, None] * coord_scale
    else:
        pts = np.stack(np.meshgrid(*axes, indexing="ij"),
                       axis=-1).reshape(-1, d) * coord_scale
    if isinstance(spec, PeriodizedElliptic):
        per_point = [spec.blended_controls(x) for x in pts]
    else:
        per_point = [control_coefficients(spec, x) for x in pts]
    n_ctl = len(per_point[0])
    out = []
    for k in range(n_ctl):
        mats = np.array([pc[k][0] for pc in per_point]).reshape(grid.shape + (d, d))
        fs = np.array([pc[k][1] for pc in per_point]).reshape(grid.shape)
        out.append((mats, fs))
    return out


def _trace_operator_matrix(grid: TorusGrid, mats: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix of u -> tr(A(x) D^2_h u) with the monotone stencil."""
    d = grid.dimension
    hs = grid.spacings
    n = int(np.prod(grid.shape))
    idx = np.arange(n).reshape(grid.shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(grid.shape)

    def add(shift_axes, coeff):
        tgt = idx
        for ax, s in shift_axes:
            tgt = np.roll(tgt, -s, axis=ax)
        rows.append(idx.ravel())
        cols.append(tgt.ravel())
        vals.append(coeff.ravel())

    if d == 1:
        a = mats[..., 0, 0]
        c = a / hs[0] ** 2
        add([(0, 1)], c)
        add([(0, -1)], c)
        diag -= 2.0 * c
    else:
        a11 = mats[..., 0, 0]
        a22 = mats[..., 1, 1]
        a12 = 0.5 * (mats[..., 0, 1] + mats[..., 1, 0])
        if np.any(np.abs(a12) > 1e-14) and abs(hs[0] - hs[1]) > 1e-12 * hs[0]:
            raise NonConvergenceError("cross-term stencil needs a square grid")
        h2 = hs[0] * hs[1]
        ax_x = (a11 - np.abs(a12)) / hs[0] ** 2
        ax_y = (a22 - np.abs(a12)) / hs[1] ** 2
        if np.any(ax_x < -1e-12) or np.any(ax_y < -1e-12):
            raise NonConvergenceError(
                "coefficient matrix not diagonally dominant: monotone stencil infeasible")
        add([(0, 1)], ax_x)
        add([(0, -1)], ax_x)
        add([(1, 1)], ax_y)
        add([(1, -1)], ax_y)
        diag -= 2.0 * (ax_x + ax_y)
        apos = np.maximum(a12, 0.0) / h2
        aneg = np.maximum(-a12, 0.0) / h2
        add([(0, 1), (1, 1)], apos)
        add([(0, -1), (1, -1)], apos)
        add([(0, 1), (1, -1)], aneg)
        add([(0, -1), (1, 1)], aneg)
        diag -= 2.0 * (apos + aneg)
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))


def _bellman_residual(controls, ops, u: np.ndarray, P: np.ndarray, grid: TorusGrid):
    """F-hat(D^2_h u + P, x) per node and the argmax control index."""
    n = u.size
    vals = []
    for (mats, fs), L in zip(controls, ops):
        trP = np.einsum("...ij,ji->...", mats, P)
        vals.append(-(L @ u.ravel()).reshape(grid.shape) - trP - fs)
    stack = np.stack(vals)
    best = np.argmax(stack, axis=0)
    fhat = np.max(stack, axis=0)
    return fhat, best


def _active_matrix(controls, ops, best: np.ndarray, P: np.ndarray, grid: TorusGrid):
    """Row-select the active control's operator and affine term."""
    n = int(np.prod(grid.shape))
    flat = best.ravel()
    Lact = sp.csr_matrix((n, n))
    g = np.zeros(grid.shape)
    for k, ((mats, fs), L) in enumerate(zip(controls, ops)):
        mask = flat == k
        if not mask.any():
            continue
        sel = sp.diags(mask.astype(float))
        Lact = Lact + sel @ L
        trP = np.einsum("...ij,ji->...", mats, P)
        g[best == k] = (trP + fs)[best == k]
    return Lact, g


def solve_resolvent(spec, P, L: float, grid: TorusGrid,
                    params: SolverParams) -> GridField:
    """v + F(D^2 v + P, L x) = 0 on the unit cell, monotone discretization.

    Linear controls solve in one Howard step; Bellman operators iterate
    policy selection until the residual drops below tol.
    """
    d = grid.dimension
    P = np.asarray(P, dtype=float).reshape(d, d)
    controls = _controls_on_grid(spec, grid, coord_scale=L)
    ops = [_trace_operator_matrix(grid, mats) for mats, _ in controls]
    n = int(np.prod(grid.shape))
    u = np.zeros(grid.shape)
    history = []
    iters = 0
    for _ in range(max(2, 50)):
        fhat, best = _bellman_residual(controls, ops, u, P, grid)
        res = float(np.max(np.abs(u + fhat)))
        history.append(res)
        if res <= params.tol:
            break
        Lact, g = _active_matrix(controls, ops, best, P, grid)
        # u - Lact u = g  (M-matrix)
        A = sp.identity(n, format="csr") - Lact
        u = spla.spsolve(A.tocsc(), g.ravel()).reshape(grid.shape)
        iters += 1
        if iters > params.max_iter:
            break
    fhat, _ = _bellman_residual(controls, ops, u, P, grid)
    res = float(np.max(np.abs(u + fhat)))
    if res > params.tol:
        raise NonConvergenceError(f"resolvent stalled at residual {res:.3e}",
                                  history)
    return GridField(grid=grid, values=u,
                     info={"residual": res, "iterations": iters})


def ergodic_constant_periodic_elliptic(prob, P, grid: TorusGrid,
                                       params: SolverParams) -> ErgodicEstimate:
    """Periodic cell constant: the unique c with an L-periodic corrector of
    F_L(D^2 chi + P, x) = c; corrector normalized to zero at node 0."""
    d = grid.dimension
    P = np.asarray(P, dtype=float).reshape(d, d)
    if isinstance(prob, PeriodizedElliptic):
        for per in grid.periods:
            if abs(per - prob.L) > 1e-12 * prob.L:
                raise ValueError("grid period must equal L")
    controls = _controls_on_grid(prob, grid, coord_scale=1.0)
    ops = [_trace_operator_matrix(grid, mats) for mats, _ in controls]
    n = int(np.prod(grid.shape))
    u = np.zeros(grid.shape)
    c = 0.0
    history = []
    iters = 0
    keep = np.arange(1, n)
    ones = sp.csr_matrix(np.ones((n, 1)))
    for _ in range(60):
        fhat, best = _bellman_residual(controls, ops, u, P, grid)
        res = float(np.max(np.abs(fhat - c)))
        history.append(res)
        if res <= params.tol:
            break
        Lact, g = _active_matrix(controls, ops, best, P, grid)
        # -Lact u - g = c with u[0] = 0:  [-Lact[:,1:] | -1] w = g
        A = sp.hstack([-Lact[:, keep], -ones], format="csc")
        w = spla.spsolve(A, g.ravel())
        u = np.zeros(n)
        u[1:] = w[:-1]
        u = u.reshape(grid.shape)
        c = float(w[-1])
        iters += 1
        if iters > params.max_iter:
            break
    fhat, _ = _bellman_residual(controls, ops, u, P, grid)
    res = float(np.max(np.abs(fhat - c)))
    if res > params.tol:
        raise NonConvergenceError(f"elliptic cell solve stalled at {res:.3e}",
                                  history)
    fld = GridField(grid=grid, values=u, info={"residual": res})
    return ErgodicEstimate(
        value=c, residual=res, iterations=iters, corrector=fld,
        lipschitz_estimate=corrector_lipschitz(fld),
        converged=res <= params.tol,
        info={"oscillation": float(u.max() - u.min())})
