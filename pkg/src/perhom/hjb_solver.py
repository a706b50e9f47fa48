"""Monotone finite-difference solvers for (possibly degenerate) viscous HJB
operators on tori, d in {1, 2}.

The discretization is Lax-Friedrichs in the gradient and centered second
differences in the diffusion; the resulting scheme is monotone whenever the
per-axis dissipation theta dominates |dH/dp| and the CFL condition holds.
Steady states are found by damped Newton on the discrete stationarity
system (with explicit pseudo-time marching as a fallback); the returned
residual is the sup-norm defect of the discrete equation, i.e. the same
quantity an explicit fixed-point iteration would drive to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import struct

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .environment import eval_potential, sigma_scalar
from .model import HamiltonianSpec
from .periodize import PeriodizedHJB

__all__ = [
    "TorusGrid",
    "GridField",
    "SolverParams",
    "ErgodicEstimate",
    "NonConvergenceError",
    "lf_numerical_hamiltonian",
    "solve_delta_problem",
    "ergodic_constant_periodic",
    "estimate_Hbar_reference",
    "corrector_lipschitz",
    "save_field",
    "load_field",
]


class NonConvergenceError(RuntimeError):
    """Solver failed to reach the residual tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic lattice; node i sits at x = i * h in [0, period)."""

    dimension: int
    periods: tuple[float, ...]
    ns: tuple[int, ...]

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if len(self.periods) != self.dimension or len(self.ns) != self.dimension:
            raise ValueError("periods/ns must match the dimension")
        if any(n < 8 for n in self.ns):
            raise ValueError("need at least 8 nodes per axis")

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(p / n for p, n in zip(self.periods, self.ns))

    def axes(self) -> list[np.ndarray]:
        return [h * np.arange(n) for h, n in zip(self.spacings, self.ns)]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.ns


def make_grid(dimension: int, period, n) -> TorusGrid:
    periods = tuple(float(p) for p in np.broadcast_to(period, (dimension,)))
    ns = tuple(int(v) for v in np.broadcast_to(n, (dimension,)))
    return TorusGrid(dimension=dimension, periods=periods, ns=ns)


@dataclass
class GridField:
    """Real values on a torus grid (row-major array of shape grid.ns)."""

    grid: TorusGrid
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")


@dataclass
class SolverParams:
    """delta is the discount (0 for ergodic problems); lf_theta overrides
    the automatic per-axis dissipation bound."""

    delta: float = 0.0
    lf_theta: tuple[float, ...] | None = None
    cfl_safety: float = 0.9
    tol: float = 1e-8
    max_iter: int = 2_000_000

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")


@dataclass
class ErgodicEstimate:
    """A computed ergodic constant (H-bar side sign convention)."""

    value: float
    residual: float
    iterations: int
    corrector: GridField
    lipschitz_estimate: float
    converged: bool
    info: dict = field(default_factory=dict)


def lf_numerical_hamiltonian(H, p_minus, p_plus, x, theta) -> float:
    """Lax-Friedrichs flux: H((p- + p+)/2, x) - sum theta_i (p+_i - p-_i)/2.

    Consistent (equals H(p, x) when p- = p+ = p) and monotone when theta
    dominates |dH/dp| componentwise on the hull of (p-, p+).
    """
    pm = np.atleast_1d(np.asarray(p_minus, dtype=float))
    pp = np.atleast_1d(np.asarray(p_plus, dtype=float))
    th = np.broadcast_to(np.asarray(theta, dtype=float), pm.shape)
    return float(H(0.5 * (pm + pp), x) - 0.5 * np.dot(th, pp - pm))


# --- grid-coefficient form of the (blended) power-family operator ---------

@dataclass
class _GridProblem:
    """H(q, x) = c1(x)|q|^gamma - V(x), diffusion coefficient a(x) per axis.

    Both the base family and its periodization stay inside this
    coefficient form, so the interior identity H_L = H is the same code
    path evaluated with identical coefficients.
    """

    grid: TorusGrid
    gamma: float
    c1: np.ndarray
    V: np.ndarray
    a: np.ndarray  # shape (d,) + grid.shape


def _discretize(spec, grid: TorusGrid) -> _GridProblem:
    axes = grid.axes()
    d = grid.dimension
    if isinstance(spec, PeriodizedHJB):
        base = spec.base
        if d == 1:
            pts = axes[0][:, None]
        else:
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        Vr = np.array([eval_potential(base.env, x) for x in pts]).reshape(grid.shape)
        sg = np.array([sigma_scalar(base.env, x) for x in pts]).reshape(grid.shape)
        zet = np.array([spec.zeta(spec._reduce(x)) for x in pts]).reshape(grid.shape)
        c1 = (1.0 - zet) * base.c1 + zet * spec.h0_c1
        V = (1.0 - zet) * Vr + zet * spec.H0_constant
        a = np.broadcast_to((1.0 - zet) * sg ** 2, (d,) + grid.shape).copy()
        return _GridProblem(grid=grid, gamma=base.gamma, c1=c1, V=V, a=a)
    if isinstance(spec, HamiltonianSpec):
        if d == 1:
            pts = axes[0][:, None]
        else:
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        V = np.array([eval_potential(spec.env, x) for x in pts]).reshape(grid.shape)
        sg = np.array([sigma_scalar(spec.env, x) for x in pts]).reshape(grid.shape)
        c1 = np.full(grid.shape, float(spec.c1))
        a = np.broadcast_to(sg ** 2, (d,) + grid.shape).copy()
        return _GridProblem(grid=grid, gamma=spec.gamma, c1=c1, V=V, a=a)
    raise TypeError(f"cannot discretize {type(spec).__name__}")


def default_theta(spec, p, grid: TorusGrid) -> tuple[float, ...]:
    """Per-axis dissipation: 1.1 * c1_max * gamma * (C_corr(|p|+1)+|p|)^(g-1)."""
    if isinstance(spec, PeriodizedHJB):
        base = spec.base
        c1_max = max(base.c1, spec.h0_c1)
    else:
        base = spec
        c1_max = base.c1
    g = base.gamma
    cc = base.constants.c_corr
    pn = float(np.linalg.norm(np.atleast_1d(p)))
    th = 1.1 * c1_max * g * (cc * (pn + 1.0) + pn) ** (g - 1.0)
    return (th,) * grid.dimension


def _operator(prob: _GridProblem, u: np.ndarray, p, theta) -> np.ndarray:
    """H-hat(D-u, D+u, x) - tr(a D^2 u) on the grid (vectorized)."""
    g = prob.grid
    d = g.dimension
    hs = g.spacings
    p = np.atleast_1d(np.asarray(p, dtype=float))
    sq = np.zeros_like(u)
    lf = np.zeros_like(u)
    diff = np.zeros_like(u)
    for i in range(d):
        up = np.roll(u, -1, axis=i)
        um = np.roll(u, 1, axis=i)
        dp = (up - u) / hs[i]
        dm = (u - um) / hs[i]
        pm = p[i] + 0.5 * (dp + dm)
        sq += pm * pm
        lf += 0.5 * theta[i] * (dp - dm)
        diff += prob.a[i] * (up - 2.0 * u + um) / hs[i] ** 2
    norm = np.sqrt(sq)
    return prob.c1 * norm ** prob.gamma - prob.V - lf - diff


def pseudo_time_step(prob: _GridProblem, u: np.ndarray, p, theta, dt: float,
                     delta: float = 0.0, c: float = 0.0) -> np.ndarray:
    """One explicit update u - dt (delta u + H-hat - tr(a D^2 u) - c)."""
    return u - dt * (delta * u + _operator(prob, u, p, theta) - c)


def stable_dt(prob: _GridProblem, theta, delta: float, cfl_safety: float) -> float:
    hs = prob.grid.spacings
    rate = delta
    for i in range(prob.grid.dimension):
        rate += theta[i] / hs[i] + 2.0 * float(prob.a[i].max()) / hs[i] ** 2
    return cfl_safety / rate


def _jacobian(prob: _GridProblem, u: np.ndarray, p, theta, delta: float):
    """Sparse Jacobian of delta*u + H-hat - diffusion w.r.t. the node values."""
    g = prob.grid
    d = g.dimension
    hs = g.spacings
    n = u.size
    shape = g.shape
    idx = np.arange(n).reshape(shape)
    p = np.atleast_1d(np.asarray(p, dtype=float))

    pm_axes = []
    sq = np.zeros(shape)
    for i in range(d):
        up = np.roll(u, -1, axis=i)
        um = np.roll(u, 1, axis=i)
        pm = p[i] + 0.5 * ((up - u) / hs[i] + (u - um) / hs[i])
        pm_axes.append(pm)
        sq += pm * pm
    norm = np.maximum(np.sqrt(sq), 1e-12)
    # dH/d|pm_i| with |q|^(gamma-2) regularized at the kink for gamma < 2
    fac = prob.c1 * prob.gamma * norm ** (prob.gamma - 2.0)

    rows, cols, vals = [], [], []
    diag = np.full(shape, delta)
    for i in range(d):
        hp = fac * pm_axes[i] / (2.0 * hs[i])
        off_p = hp - 0.5 * theta[i] / hs[i] - prob.a[i] / hs[i] ** 2
        off_m = -hp - 0.5 * theta[i] / hs[i] - prob.a[i] / hs[i] ** 2
        diag += theta[i] / hs[i] + 2.0 * prob.a[i] / hs[i] ** 2
        rows.append(idx.ravel())
        cols.append(np.roll(idx, -1, axis=i).ravel())
        vals.append(off_p.ravel())
        rows.append(idx.ravel())
        cols.append(np.roll(idx, 1, axis=i).ravel())
        vals.append(off_m.ravel())
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))


def _residual_discounted(prob: _GridProblem, u: np.ndarray, p, theta,
                         delta: float) -> np.ndarray:
    """delta*u + H-hat - diffusion, evaluated on the mean-centered field.

    v^delta carries a constant of size |H-bar|/delta; centering before the
    finite differences keeps the residual roundoff at the O(1) oscillation
    scale instead of the 1/delta scale.
    """
    m = float(u.mean())
    uc = u - m
    return delta * uc + delta * m + _operator(prob, uc, p, theta)


def _newton_discounted(prob: _GridProblem, p, theta, params: SolverParams,
                       u0: np.ndarray | None = None):
    """Damped Newton for delta*u + H-hat - diffusion = 0."""
    delta = params.delta
    u = np.zeros(prob.grid.shape) if u0 is None else u0.copy()
    dt = stable_dt(prob, theta, delta, params.cfl_safety)
    history = []
    iters = 0
    # kinked (flat-spot) solutions can force hundreds of short damped
    # steps before the active set settles and Newton turns quadratic
    for _ in range(5000):
        r = _residual_discounted(prob, u, p, theta, delta)
        res = float(np.max(np.abs(r)))
        history.append(res)
        if res <= params.tol:
            return u, res, iters, history
        J = _jacobian(prob, u, p, theta, delta)
        du = spla.spsolve(J, r.ravel()).reshape(prob.grid.shape)
        step = 1.0
        improved = False
        while step >= 2.0 ** -20:
            u_new = u - step * du
            r_new = _residual_discounted(prob, u_new, p, theta, delta)
            if float(np.max(np.abs(r_new))) < res * (1.0 - 1e-4 * step) or \
                    float(np.max(np.abs(r_new))) <= params.tol:
                u = u_new
                improved = True
                break
            step *= 0.5
        iters += 1
        if not improved:
            # fall back to explicit marching to escape a bad linearization
            u_good = u.copy()
            for _ in range(500):
                u = pseudo_time_step(prob, u, p, theta, dt, delta=delta)
                if not np.all(np.isfinite(u)):
                    u, dt = u_good.copy(), 0.5 * dt
                else:
                    u_good = u
            iters += 500
        if iters > params.max_iter:
            break
    r = _residual_discounted(prob, u, p, theta, delta)
    res = float(np.max(np.abs(r)))
    history.append(res)
    if not res <= params.tol:
        raise NonConvergenceError(
            f"discounted solve stalled at residual {res:.3e}", history)
    return u, res, iters, history


def solve_delta_problem(spec, p, grid: TorusGrid, params: SolverParams) -> GridField:
    """Approximate corrector: delta v - tr(A D^2 v) + H(Dv + p, x) = 0.

    Returns the grid field with ``info`` carrying residual and iteration
    metadata.  Raises NonConvergenceError when the tolerance is out of
    reach within the iteration budget.
    """
    if params.delta <= 0:
        raise ValueError("solve_delta_problem needs delta > 0")
    prob = _discretize(spec, grid)
    theta = params.lf_theta or default_theta(spec, p, grid)
    u, res, iters, history = _newton_discounted(prob, p, theta, params)
    bound = float(np.max(np.abs(prob.c1 * np.linalg.norm(np.atleast_1d(p))
                                ** prob.gamma - prob.V))) / params.delta
    if float(np.max(np.abs(u))) > 1.01 * bound + params.tol / params.delta:
        raise NonConvergenceError("discounted solution violates the sup bound",
                                  history)
    return GridField(grid=grid, values=u,
                     info={"residual": res, "iterations": iters,
                           "theta": tuple(theta), "delta": params.delta})


def _newton_ergodic(prob: _GridProblem, p, theta, params: SolverParams,
                    u0: np.ndarray | None = None):
    """Damped Newton on the stationarity system H-hat - diffusion = c with
    the corrector pinned to zero at node 0.

    This accelerates relative value iteration: the returned (corrector,
    value) pair is exactly what the explicit RVI update converges to, with
    the same residual contract.
    """
    g = prob.grid
    n = int(np.prod(g.shape))
    u = np.zeros(g.shape) if u0 is None else u0.copy()
    u = u - u.ravel()[0]
    dt = stable_dt(prob, theta, 0.0, params.cfl_safety)
    # explicit RVI prelude to land in the Newton basin
    c = 0.0
    u_good = u.copy()
    for _ in range(30):
        r = _operator(prob, u, p, theta)
        c = float(np.mean(r))
        u = u - dt * (r - c)
        u = u - u.ravel()[0]
        if not np.all(np.isfinite(u)):
            # transient gradients can exceed the hull theta was sized for,
            # breaking monotonicity; a smaller step restores stability
            u, dt = u_good.copy(), 0.5 * dt
        else:
            u_good = u.copy()
    history = []
    iters = 30
    keep = np.arange(1, n)
    for _ in range(2000):
        r = _operator(prob, u, p, theta) - c
        res = float(np.max(np.abs(r)))
        history.append(res)
        if res <= params.tol:
            return u, c, res, iters, history
        J = _jacobian(prob, u, p, theta, 0.0)
        Ju = J[:, keep]
        Jc = sp.csr_matrix(-np.ones((n, 1)))
        A = sp.hstack([Ju, Jc], format="csc")
        dw = spla.spsolve(A, r.ravel())
        du = np.zeros(n)
        du[1:] = dw[:-1]
        dc = dw[-1]
        step = 1.0
        improved = False
        while step >= 2.0 ** -20:
            u_new = u - step * du.reshape(g.shape)
            c_new = c - step * dc
            r_new = _operator(prob, u_new, p, theta) - c_new
            if float(np.max(np.abs(r_new))) < res * (1.0 - 1e-4 * step) or \
                    float(np.max(np.abs(r_new))) <= params.tol:
                u, c = u_new, c_new
                improved = True
                break
            step *= 0.5
        iters += 1
        if not improved:
            # Newton can stall when the corrector is non-unique (flat-spot
            # momenta make the pinned system nearly singular); relative
            # value iteration still converges, so march explicitly in
            # chunks until tolerance or the retry budget runs out.
            chunk = 1000
            u_good, c_good = u.copy(), c
            res_good = res
            for _ in range(50):
                for _ in range(chunk):
                    r = _operator(prob, u, p, theta)
                    c = float(np.mean(r))
                    u = u - dt * (r - c)
                    u = u - u.ravel()[0]
                iters += chunk
                r = _operator(prob, u, p, theta) - c
                res_chunk = float(np.max(np.abs(r)))
                if not np.isfinite(res_chunk) or res_chunk > 10.0 * res_good:
                    # marching went unstable (gradients left the hull theta
                    # was sized for): back off to the last good state with a
                    # smaller step, which keeps the same fixed point
                    u, c, dt = u_good.copy(), c_good, 0.5 * dt
                    continue
                u_good, c_good, res_good = u.copy(), c, res_chunk
                if res_chunk <= params.tol or iters > params.max_iter:
                    break
        if iters > params.max_iter:
            break
    r = _operator(prob, u, p, theta) - c
    res = float(np.max(np.abs(r)))
    history.append(res)
    if not res <= params.tol:
        raise NonConvergenceError(
            f"ergodic solve stalled at residual {res:.3e}", history)
    return u, c, res, iters, history


def corrector_lipschitz(fld: GridField) -> float:
    """Max one-sided difference quotient over nodes and axes."""
    u = fld.values
    out = 0.0
    for i, h in enumerate(fld.grid.spacings):
        out = max(out, float(np.max(np.abs(np.roll(u, -1, axis=i) - u))) / h)
    return out


def ergodic_constant_periodic(prob, p, grid: TorusGrid,
                              params: SolverParams,
                              init: np.ndarray | None = None) -> ErgodicEstimate:
    """Periodic cell problem: the unique c with an L-periodic corrector for
    -tr(A_L D^2 chi) + H_L(D chi + p, x) = c; the returned value is c
    (the H-bar-side constant).

    The corrector is normalized to zero at node 0 (spatial origin).
    """
    if isinstance(prob, PeriodizedHJB):
        for per in grid.periods:
            if abs(per - prob.L) > 1e-12 * prob.L:
                raise ValueError("grid period must equal L")
    gprob = _discretize(prob, grid)
    theta = params.lf_theta or default_theta(prob, p, grid)
    u, c, res, iters, _ = _newton_ergodic(gprob, p, theta, params, u0=init)
    fld = GridField(grid=grid, values=u, info={"residual": res})
    return ErgodicEstimate(
        value=c, residual=res, iterations=iters, corrector=fld,
        lipschitz_estimate=corrector_lipschitz(fld),
        converged=res <= params.tol,
        info={"theta": tuple(theta)})


def estimate_Hbar_reference(spec: HamiltonianSpec, p, delta_seq, box: float,
                            params: SolverParams, grid_n: int | None = None,
                            box_multiplier: float = 1.0,
                            dissipation_extrapolation: bool = False) -> ErgodicEstimate:
    """Reference ergodic constant via the small-discount limit.

    Solves the discounted problem on a torus of period ``box`` for each
    discount in the (decreasing) sequence, reads -delta v(0) and Richardson
    extrapolates linearly in delta.  ``box_multiplier`` is the constant c
    in the nominal requirement box >= c / min(delta); for periodic or
    periodically wrapped media a smaller box is exact, so a violation is
    only flagged in ``info``, not fatal.

    With ``dissipation_extrapolation`` each discounted problem is solved
    twice, with dissipation theta and 2 theta, and the two values are
    extrapolated linearly to theta = 0.  The leading scheme error is the
    Lax-Friedrichs dissipation, linear in theta, so this removes the O(h)
    bias that otherwise dominates on flat spots of the effective
    Hamiltonian.
    """
    deltas = [float(d) for d in delta_seq]
    if len(deltas) < 2 or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("need a decreasing sequence of at least 2 discounts")
    d = spec.dimension
    n = grid_n or max(64, int(64 * box))
    grid = make_grid(d, box, n)
    small_box = box < box_multiplier / deltas[-1]
    theta0 = params.lf_theta or default_theta(spec, p, grid)
    vals = []
    total_iters = 0
    last = None
    for dl in deltas:
        per_theta = []
        mults = (1.0, 2.0) if dissipation_extrapolation else (1.0,)
        for mult in mults:
            pp = SolverParams(delta=dl,
                              lf_theta=tuple(mult * t for t in theta0),
                              cfl_safety=params.cfl_safety, tol=params.tol,
                              max_iter=params.max_iter)
            fld = solve_delta_problem(spec, p, grid, pp)
            total_iters += fld.info["iterations"]
            per_theta.append(-dl * float(fld.values.ravel()[0]))
            if mult == 1.0:
                last = fld
        if dissipation_extrapolation:
            vals.append(2.0 * per_theta[0] - per_theta[1])
        else:
            vals.append(per_theta[0])
    extrap = []
    for (da, va), (db, vb) in zip(zip(deltas, vals), zip(deltas[1:], vals[1:])):
        extrap.append((vb * da - va * db) / (da - db))
    value = extrap[-1]
    residual = abs(extrap[-1] - extrap[-2]) if len(extrap) >= 2 else \
        abs(vals[-1] - vals[-2])
    diffs = np.diff(vals)
    monotone = bool(np.all(diffs >= 0) or np.all(diffs <= 0))
    sup_dev = float(np.max(np.abs(deltas[-1] * last.values + value)))
    return ErgodicEstimate(
        value=value, residual=residual, iterations=total_iters,
        corrector=last, lipschitz_estimate=corrector_lipschitz(last),
        converged=True,
        info={"delta_values": vals, "extrapolants": extrap,
              "monotone_input": monotone, "sup_deviation": sup_dev,
              "small_box": small_box})


# --- flat binary persistence ("PHF1") -------------------------------------

def save_field(fld: GridField, path) -> None:
    """magic 'PHF1', then d, N per axis (int64 LE), period per axis
    (float64 LE), then values as float64 LE row-major."""
    g = fld.grid
    with open(path, "wb") as f:
        f.write(b"PHF1")
        f.write(struct.pack("<q", g.dimension))
        for n in g.ns:
            f.write(struct.pack("<q", n))
        for p in g.periods:
            f.write(struct.pack("<d", p))
        f.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def load_field(path) -> GridField:
    with open(path, "rb") as f:
        if f.read(4) != b"PHF1":
            raise ValueError("bad magic bytes")
        (d,) = struct.unpack("<q", f.read(8))
        ns = tuple(struct.unpack("<q", f.read(8))[0] for _ in range(d))
        periods = tuple(struct.unpack("<d", f.read(8))[0] for _ in range(d))
        vals = np.frombuffer(f.read(), dtype="<f8").reshape(ns)
    grid = TorusGrid(dimension=d, periods=periods, ns=ns)
    return GridField(grid=grid, values=vals.copy())
