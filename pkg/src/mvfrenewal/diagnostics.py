"""A-priori bounds of the admissible set, checks of solutions against them,
mass balance and a measured contraction factor.

The admissible set holds pairs ``(u, z)`` with

* ``z(t) <= Z(t)``, ``u(t, 0) <= kappa Z(t)`` and ``u(t, x) <= U(t)``;
* ``|u(s, 0) - u(t, 0)| <= G_u * int_t^s c_hat``;
* ``|u(t, x') - u(t, x)| <= L_u(t) |x' - x|``.

:func:`compute_bounds` evaluates ``Z, U, G_u, L_u`` from the assumption
constants; :func:`verify_admissible` tests a discrete pair against them on
grid differences (adjacent and stride-2 nodes).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .field import DensityField, TotalSizeTrace, total_size_trace
from .model import AssumptionConstants, ModelSpec, Violation
from .solver import (BieleckiWeight, apply_operator, bielecki_distance, default_weight_constant,
                     initial_guess, make_grid)

_EXP_LIMIT = 700.0


class DiagnosticsError(ArithmeticError):
    pass


def _exp(v, what):
    v = np.asarray(v, dtype=float)
    if np.any(v > _EXP_LIMIT) or not np.all(np.isfinite(v)):
        raise DiagnosticsError(f"bound {what} overflows: exponent {float(np.max(v)):.4g} exceeds {_EXP_LIMIT}")
    out = np.exp(v)
    return out if out.ndim else float(out)


@dataclass
class AdmissibleBounds:
    """Envelope functions of the admissible set.

    ``Z``, ``U`` and ``L_u`` are vectorized functions of ``t``; ``G_u`` and
    ``L_u0 = L_u(0)`` are numbers. ``remark_residual`` is the relative
    residual of ``L_u`` substituted into its defining integral equation.
    """

    Z: Callable
    U: Callable
    G_u: float
    L_u: Callable
    L_u0: float
    kappa: float
    c_hat_integral: Callable
    remark_residual: float = math.nan


def compute_bounds(constants: AssumptionConstants, a, tau=0.0, residual_points=9) -> AdmissibleBounds:
    """Evaluate ``Z, U, G_u, L_u`` on ``[0, a]``.

    ``L_u`` uses its closed exponential form; the form is then substituted
    into the linear integral equation it solves and the largest relative
    residual over ``residual_points`` times is stored on the result.
    """
    k = constants
    kap = float(k.kappa)

    def I(name, t):
        return k.integral(name, t)

    def Z(t):
        return k.phi_inf1 * _exp(kap * np.asarray(I("c_hat", t)) + np.asarray(I("M_W", t)), "Z")

    def U(t):
        return _exp(I("M_lambda", t), "U") * np.maximum(k.phi_sup, kap * Z(t))

    Za = float(Z(a))
    ch_a = float(I("c_hat", a))
    G_u = ((kap ** 2 * Za + (2.0 * k.L_K + kap ** 2 * Za * k.ratio_sup("M_W", a)) * (ch_a + k.phi_inf1))
           * _exp(I("M_W", a), "G_u"))
    E = _exp(float(I("L_c", a)) + float(I("M_lambda", a)), "L_u")
    base = k.L_phi + (G_u + kap * Za * k.ratio_sup("M_lambda", a)) / k.eps0
    L_u0 = base * E
    A = (kap * Za + k.phi_sup) * E

    def L_u(t):
        return -1.0 + (1.0 + L_u0) * _exp(A * np.asarray(I("L_lambda", t)), "L_u")

    L_lam = k.fn("L_lambda")
    resid = 0.0
    for t in np.linspace(0.0, a, residual_points):
        integral = integrate.quad(lambda s: float(L_lam(s)) * (1.0 + float(L_u(s))), 0.0, float(t),
                                  epsabs=0.0, epsrel=1e-12, limit=200)[0]
        rhs = E * (base + (kap * Za + k.phi_sup) * integral)
        lhs = float(L_u(t))
        resid = max(resid, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return AdmissibleBounds(Z, U, float(G_u), L_u, float(L_u0), kap,
                            lambda t: k.integral("c_hat", t), resid)


@dataclass
class AdmissibilityReport:
    violations: list = field(default_factory=list)
    n_checks: int = 0

    @property
    def ok(self):
        return not self.violations

    def by_check(self):
        out = {}
        for v in self.violations:
            out[v.check] = out.get(v.check, 0) + 1
        return out

    def summary(self):
        if self.ok:
            return f"admissibility: {self.n_checks} checks, no violations"
        counts = ", ".join(f"{k}: {n}" for k, n in sorted(self.by_check().items()))
        return f"admissibility: {len(self.violations)} violation(s) in {self.n_checks} checks ({counts})"


def verify_admissible(u: DensityField, z: TotalSizeTrace, bounds: AdmissibleBounds, slack=0.05,
                      abs_tol=1e-12) -> AdmissibilityReport:
    """List every grid node or node pair where ``(u, z)`` breaks a bound."""
    g = u.grid
    i0 = g.i0
    t = g.forward.nodes
    uf = u.values[i0:]
    zf = z.values[i0:]
    rep = AdmissibilityReport()
    f = 1.0 + slack

    def flag(name, values, limits, tt, xx):
        bad = values > limits * f + abs_tol
        rep.n_checks += int(np.size(values))
        for idx in np.argwhere(bad):
            idx = tuple(idx)
            rep.violations.append(Violation(name, float(values[idx]), float(limits[idx]),
                                            float(np.broadcast_to(tt, values.shape)[idx]),
                                            float(np.broadcast_to(xx, values.shape)[idx])))

    Zt = np.asarray(bounds.Z(t), dtype=float)
    Ut = np.asarray(bounds.U(t), dtype=float)
    flag("boundary_bound", uf[:, 0], bounds.kappa * Zt, t, 0.0)
    flag("total_size_bound", zf, Zt, t, np.nan)
    flag("density_bound", uf, Ut[:, None] * np.ones_like(uf), t[:, None], g.x[None, :])

    cum = np.asarray(bounds.c_hat_integral(t), dtype=float)
    Lu = np.asarray(bounds.L_u(t), dtype=float)
    for stride in (1, 2):
        if len(t) > stride:
            du = np.abs(uf[stride:, 0] - uf[:-stride, 0])
            flag(f"boundary_lipschitz_{stride}", du, bounds.G_u * (cum[stride:] - cum[:-stride]),
                 t[stride:], 0.0)
        if g.n_x >= stride:
            dx = np.abs(uf[:, stride:] - uf[:, :-stride])
            lim = Lu[:, None] * (stride * g.dx) * np.ones_like(dx)
            flag(f"space_lipschitz_{stride}", dx, lim, t[:, None], g.x[None, stride:])
    return rep


def write_violations_csv(path, violations):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "t", "x", "value", "bound"])
        for v in violations:
            w.writerow([v.check, repr(float(v.t)), repr(float(v.x)), repr(float(v.value)), repr(float(v.bound))])


def mass_balance_residual(model: ModelSpec, u: DensityField, z: TotalSizeTrace | None = None) -> float:
    """``max_t |z(t) - z(0)|`` on ``[0, a]`` for a conservative model.

    Only defined for ``K == 0`` with ``W == 0`` declared (``model.conservative``).
    """
    if model.kernel is not None or not model.conservative:
        raise ValueError(f"mass balance needs K == 0 and a declared W == 0; model {model.name!r} has neither "
                         "or only one")
    z = z if z is not None else total_size_trace(u)
    zf = z.values[z.grid.i0:]
    return float(np.max(np.abs(zf - zf[0])))


@dataclass
class ContractionReport:
    theta_hat: float
    ratios: np.ndarray
    C: float
    amplitudes: np.ndarray


def _smooth_pattern(rng, g):
    t = g.times[:, None] / g.a
    x = g.x[None, :] / g.x_max
    w1, w2, w3 = rng.uniform(0.5, 3.0, 3)
    p1, p2 = rng.uniform(0, 2 * np.pi, 2)
    pat = np.sin(2 * np.pi * w1 * x + p1) * np.cos(np.pi * w2 * t + p2) + 0.5 * np.sin(np.pi * w3 * (x + t))
    pat /= np.max(np.abs(pat))
    return pat * np.clip(t, 0.0, None)


def empirical_contraction(model: ModelSpec, C=None, n_pairs=20, seed=0, grid=None, base=None,
                          constants=None, amplitude=0.2, slack=0.05) -> ContractionReport:
    """Measure ``d_B(T p1, T p2) / d_B(p1, p2)`` over random admissible pairs.

    Pairs are smooth relative perturbations of ``base`` (by default the
    operator's image of the initial guess) that vanish on the initial
    strip and are shrunk until they respect ``Z`` and ``U``.
    """
    if n_pairs < 2:
        raise ValueError("need at least two pairs")
    grid = grid or make_grid(model)
    constants = constants or model.constants
    if constants is None:
        from .model import estimate_constants
        constants = estimate_constants(model).constants
    C = default_weight_constant(constants, model.a) if C is None else float(C)
    weight = BieleckiWeight(C, constants)
    if base is None:
        img = apply_operator(model, *initial_guess(model, grid))
        base = (img.u, img.z)
    bu = base[0].values
    bounds = compute_bounds(constants, model.a, model.tau)
    i0 = grid.i0
    t = grid.forward.nodes
    Ut = np.concatenate([np.full(i0, np.inf), np.asarray(bounds.U(t))])
    Zt = np.concatenate([np.full(i0, np.inf), np.asarray(bounds.Z(t))])
    rng = np.random.default_rng(seed)

    def member():
        pat = _smooth_pattern(rng, grid)
        eps = amplitude * rng.uniform(0.25, 1.0)
        for _ in range(40):
            vals = bu * (1.0 + eps * pat)
            uu = DensityField(grid, vals)
            zz = total_size_trace(uu)
            if np.all(vals <= Ut[:, None] * (1 + slack)) and np.all(zz.values <= Zt * (1 + slack)):
                return uu, zz, eps
            eps *= 0.5
        return uu, zz, eps

    ratios, amps = [], []
    for k in range(n_pairs):
        u1, z1, e1 = member()
        u2, z2, e2 = member()
        d_in = bielecki_distance((u1, z1), (u2, z2), weight)
        r1 = apply_operator(model, u1, z1)
        r2 = apply_operator(model, u2, z2)
        d_out = bielecki_distance((r1.u, r1.z), (r2.u, r2.z), weight)
        ratio = d_out / d_in if d_in > 0 else 0.0
        if not math.isfinite(ratio):
            raise DiagnosticsError(f"contraction ratio not finite for pair {k} "
                                   f"(input distance {d_in!r}, image distance {d_out!r})")
        ratios.append(ratio)
        amps.append((e1, e2))
    ratios = np.asarray(ratios)
    return ContractionReport(float(ratios.max()), ratios, C, np.asarray(amps))
