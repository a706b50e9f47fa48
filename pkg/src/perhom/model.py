"""Operator families H, A, F and numerical checks of their standing assumptions.

The Hamiltonian family is the power-minus-potential class
``H(p, x) = c1 |p|^gamma - V(x)`` with diffusion ``A = Sigma Sigma^T`` and
``Sigma`` a scalar multiple of the identity derived from the medium.  The
elliptic family is either linear, ``F(X, x) = -a(x) tr(X) + f(x)``, or a
finite Bellman max of such linear operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .environment import (
    EnvironmentSample,
    eval_potential,
    eval_sigma,
    sigma_scalar,
)

__all__ = [
    "StructuralConstants",
    "HamiltonianSpec",
    "EllipticSpec",
    "eval_H",
    "eval_A",
    "eval_F",
    "verify_structure",
]


@dataclass(frozen=True)
class StructuralConstants:
    """Declared structural constants of an operator family.

    ``c_struct`` is the coercivity/Lipschitz constant, ``gamma`` the
    coercivity exponent, ``c_corr`` the corrector gradient constant
    (||Dv + p|| <= c_corr (|p|+1)), ``lambda_bar < Lambda_bar`` the
    ellipticity constants, ``c_bar`` bounds |F(0,0)| and ``rho_slope`` is
    the slope of the linear continuity modulus.
    """

    c_struct: float = 1.0
    gamma: float = 2.0
    c_corr: float = 1.0
    lambda_bar: float = 1.0
    Lambda_bar: float = 2.0
    c_bar: float = 1.0
    rho_slope: float = 1.0

    def __post_init__(self):
        if self.c_struct < 1:
            raise ValueError("c_struct must be >= 1")
        if self.gamma <= 1:
            raise ValueError("gamma must be > 1")
        if self.c_corr < 1:
            raise ValueError("c_corr must be >= 1")
        if not 0 < self.lambda_bar < self.Lambda_bar:
            raise ValueError("need 0 < lambda_bar < Lambda_bar")

    def to_json(self) -> dict:
        return {
            "c_struct": self.c_struct, "gamma": self.gamma,
            "c_corr": self.c_corr, "lambda_bar": self.lambda_bar,
            "Lambda_bar": self.Lambda_bar, "c_bar": self.c_bar,
            "rho_slope": self.rho_slope,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StructuralConstants":
        return cls(**obj)


@dataclass(frozen=True)
class HamiltonianSpec:
    """H(p, x) = c1 |p|^gamma - V(x) with A = (sigma-factor)^2 I."""

    env: EnvironmentSample
    c1: float
    gamma: float
    constants: StructuralConstants

    def __post_init__(self):
        if self.c1 <= 0:
            raise ValueError("c1 must be positive")
        if not 1 < self.gamma <= 2:
            raise ValueError("gamma must lie in (1, 2]")

    @property
    def dimension(self) -> int:
        return self.env.dimension


@dataclass(frozen=True)
class EllipticSpec:
    """Linear or Bellman elliptic family with env-derived coefficients.

    ``family`` is "linear" or "bellman".  Each control is a dict with keys

    * ``matrix`` -- constant SPD base matrix M (row-major list),
    * ``a`` -- coefficient descriptor for the scalar multiplier a(x),
    * ``f`` -- descriptor for the source term f(x).

    Descriptors: {"const": v} | {"affine_of_V": [k, b]} (k*V(x)+b) |
    {"inv_cos": [amp]} (1/(1+amp*cos(2 pi x_1))) | {"cos": [b, amp]}
    (b + amp*cos(2 pi x_1)).  The linear family is the one-control case
    with M = I.
    """

    env: EnvironmentSample | None
    family: str
    controls: tuple = ()
    constants: StructuralConstants = field(default_factory=StructuralConstants)
    dimension: int = 1

    def __post_init__(self):
        if self.family not in ("linear", "bellman"):
            raise ValueError("family must be 'linear' or 'bellman'")
        if not self.controls:
            raise ValueError("need at least one control")
        if len(self.controls) > 8:
            raise ValueError("at most 8 controls")


def _coeff_eval(desc: dict, env: EnvironmentSample | None, x) -> float:
    if "const" in desc:
        return float(desc["const"])
    if "affine_of_V" in desc:
        k, b = desc["affine_of_V"]
        return k * eval_potential(env, x) + b
    x0 = float(np.atleast_1d(x)[0])
    if "inv_cos" in desc:
        (amp,) = desc["inv_cos"]
        return 1.0 / (1.0 + amp * math.cos(2.0 * math.pi * x0))
    if "cos" in desc:
        b, amp = desc["cos"]
        return b + amp * math.cos(2.0 * math.pi * x0)
    raise ValueError(f"unknown coefficient descriptor {desc}")


def control_coefficients(spec: EllipticSpec, x) -> list[tuple[np.ndarray, float]]:
    """Per-control (A_alpha(x), f_alpha(x)) at a point."""
    out = []
    d = spec.dimension
    for ctl in spec.controls:
        m = np.array(ctl.get("matrix", np.eye(d).tolist()), dtype=float).reshape(d, d)
        a = _coeff_eval(ctl["a"], spec.env, x)
        f = _coeff_eval(ctl.get("f", {"const": 0.0}), spec.env, x)
        out.append((a * m, f))
    return out


def eval_H(spec: HamiltonianSpec, p, x) -> float:
    """H(p, x) = c1 |p|^gamma - V(x)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return spec.c1 * float(np.linalg.norm(p)) ** spec.gamma - eval_potential(spec.env, x)


def eval_A(spec: HamiltonianSpec, x) -> np.ndarray:
    """A(x) = Sigma(x) Sigma(x)^T."""
    s = eval_sigma(spec.env, x)
    return s @ s.T


def eval_F(spec: EllipticSpec, X, x) -> float:
    """F(X, x) = max over controls of (-tr(A_alpha X) - f_alpha)."""
    X = np.asarray(X, dtype=float).reshape(spec.dimension, spec.dimension)
    vals = [-float(np.trace(a_mat @ X)) - f for a_mat, f in control_coefficients(spec, x)]
    return max(vals)


def _negate_desc(desc: dict) -> dict:
    if "const" in desc:
        return {"const": -float(desc["const"])}
    if "affine_of_V" in desc:
        k, b = desc["affine_of_V"]
        return {"affine_of_V": [-k, -b]}
    if "cos" in desc:
        b, amp = desc["cos"]
        return {"cos": [-b, -amp]}
    raise ValueError(f"cannot negate descriptor {desc}")


def linear_elliptic_spec(env, a_desc: dict, f_desc: dict,
                         constants: StructuralConstants,
                         dimension: int = 1) -> EllipticSpec:
    """F(X, x) = -a(x) tr(X) + f(x) as a one-control Bellman spec.

    The stored control subtracts its source term, so f is negated here.
    """
    ctl = {"matrix": np.eye(dimension).tolist(), "a": a_desc,
           "f": _negate_desc(f_desc)}
    return EllipticSpec(env=env, family="linear", controls=(ctl,),
                        constants=constants, dimension=dimension)


def _frob(x) -> float:
    return float(np.linalg.norm(x))


def verify_structure(spec, samples: int = 2000, box: float = 4.0, seed: int = 0) -> dict:
    """Sampled audit of the structural assumptions against declared constants.

    Returns a report ``{name: {"worst": float, "bound": float, "passed":
    bool}}``.  ``worst`` is the largest observed ratio of measured to
    allowed quantity, so passing means worst <= 1.  This is a sampling
    check, not a proof; failures show up as report entries, never raises.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    report = {}

    def entry(name, worst, bound=1.0):
        report[name] = {"worst": float(worst), "bound": float(bound),
                        "passed": bool(worst <= bound)}

    if isinstance(spec, HamiltonianSpec):
        C = spec.constants.c_struct
        g = spec.constants.gamma
        d = spec.dimension
        xs = rng.uniform(-box / 2, box / 2, size=(samples, d))
        ps = rng.uniform(-5, 5, size=(samples, d))
        qs = rng.uniform(-5, 5, size=(samples, d))
        ys = rng.uniform(-box / 2, box / 2, size=(samples, d))

        worst_co = 0.0
        worst_cx = 0.0
        worst_hx = 0.0
        worst_hp = 0.0
        worst_sx = 0.0
        for x, y, p, q in zip(xs, ys, ps, qs):
            h = eval_H(spec, p, x)
            lo = C ** -1 * np.linalg.norm(p) ** g - C
            hi = C * np.linalg.norm(p) ** g + C
            # ratio > 1 means the sandwich is violated
            worst_co = max(worst_co, lo - h, h - hi)
            hm = eval_H(spec, (p + q) / 2, x)
            worst_cx = max(worst_cx, hm - 0.5 * (h + eval_H(spec, q, x)))
            dxy = np.linalg.norm(x - y)
            if dxy > 0:
                lhs = abs(h - eval_H(spec, p, y))
                worst_hx = max(worst_hx, lhs / (C * (np.linalg.norm(p) ** g + 1) * dxy))
            dpq = np.linalg.norm(p - q)
            if dpq > 0:
                lhs = abs(h - eval_H(spec, q, x))
                den = C * (np.linalg.norm(p) ** (g - 1) + np.linalg.norm(q) ** (g - 1) + 1) * dpq
                worst_hp = max(worst_hp, lhs / den)
            if dxy > 0:
                ds = _frob(eval_sigma(spec.env, x) - eval_sigma(spec.env, y))
                worst_sx = max(worst_sx, ds / (C * dxy))
        entry("coercivite", worst_co, 0.0)
        entry("convex", worst_cx, 1e-12)
        entry("Hx_Hy", worst_hx)
        entry("Hp_Hq", worst_hp)
        entry("Sx_Sy", worst_sx)
        return report

    # elliptic spec
    cst = spec.constants
    d = spec.dimension
    xs = rng.uniform(-box / 2, box / 2, size=(samples, d))
    ys = rng.uniform(-box / 2, box / 2, size=(samples, d))
    min_up = math.inf  # F(X+Y)-F(X) <= -lambda ||Y||
    worst_lo = 0.0     # F(X+Y)-F(X) >= -Lambda ||Y|| (Frobenius, literal form)
    worst_lo_tr = 0.0  # same with the trace norm (standard form, recorded)
    worst_b = abs(eval_F(spec, np.zeros((d, d)), np.zeros(d))) / cst.c_bar
    worst_rho = 0.0
    for x, y in zip(xs, ys):
        X = rng.uniform(-2, 2, size=(d, d))
        X = 0.5 * (X + X.T)
        B = rng.uniform(-1, 1, size=(d, d))
        Y = B @ B.T  # PSD
        ny = _frob(Y)
        if ny > 1e-9:
            diff = eval_F(spec, X + Y, x) - eval_F(spec, X, x)
            min_up = min(min_up, diff / (-cst.lambda_bar * ny))
            worst_lo = max(worst_lo, diff / (-cst.Lambda_bar * ny))
            worst_lo_tr = max(worst_lo_tr, diff / (-cst.Lambda_bar * float(np.trace(Y))))
        dxy = np.linalg.norm(x - y)
        if dxy > 0:
            lhs = abs(eval_F(spec, X, x) - eval_F(spec, X, y))
            worst_rho = max(worst_rho, lhs / (cst.rho_slope * dxy))
    # min_up >= 1 certifies at least lambda_bar decay per unit ||Y||;
    # worst_lo <= 1 would certify the literal Frobenius lower bound (it can
    # fail for d >= 2, the trace variant is the sharp one)
    entry("Felliptic_upper", 1.0 / min_up if min_up > 0 else math.inf)
    report["Felliptic_lower_frobenius"] = {
        "worst": float(worst_lo), "bound": 1.0, "passed": bool(worst_lo <= 1.0)}
    entry("Felliptic_lower_trace", worst_lo_tr)
    entry("Fbounded", worst_b)
    entry("Fcontinuous", worst_rho)
    return report
