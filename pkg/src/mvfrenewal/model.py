"""Problem instances: coefficients, renewal kernel, initial data and the
assumption constants that go with them.

Evaluator conventions (all must accept numpy arrays for ``x`` and return
arrays broadcast against it):

``c(t, x, q)``
    characteristic speed; ``q`` is the total-size history ``z_t``.
``lam(t, x, w, q)``
    growth rate; ``w`` is the (batched) density history ``u_t(., x)``.
``dc_dx(t, x, q)``
    optional exact space derivative of ``c``.
``kernel(t, x)``
    a :class:`RenewalFunctional`, or ``None`` on the model for K == 0.
``phi(t, x)``
    initial density on ``[-tau, 0] x [0, x_max]``.

History arguments follow the segment protocol documented in
:mod:`mvfrenewal.field`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np
from scipy import integrate

from .field import FunctionHistory, HistorySegment
from .numerics import Grid1D, quad_composite


class ModelError(ValueError):
    """Invalid model or a failing evaluator."""


@dataclass(frozen=True)
class RenewalFunctional:
    """Positive functional on history segments: atoms plus a density part.

    ``atoms`` is a sequence of ``(offset, weight)`` with offsets in
    ``[-tau, 0]``. ``density`` is either a constant weight per unit time
    or a callable ``s -> weight``. Weights may be arrays, one per point of
    a batched evaluation.
    """

    atoms: tuple = ()
    density: float | Callable | None = None

    def apply(self, seg: HistorySegment):
        total = 0.0
        for s, w in self.atoms:
            total = total + w * seg.at(s)
        if self.density is None:
            return total
        if callable(self.density):
            offs = seg.offsets
            if len(offs) < 2:
                return total
            dens = np.stack([np.broadcast_to(self.density(s), np.shape(seg.values)[:-1]) for s in offs], axis=-1)
            return total + np.trapezoid(dens * seg.values, offs, axis=-1)
        return total + self.density * seg.integral()

    def _density_samples(self, offsets):
        if self.density is None:
            return 0.0
        if callable(self.density):
            return np.stack([np.asarray(self.density(s), dtype=float) for s in offsets], axis=-1)
        return np.full(len(offsets), float(self.density))

    def norm(self, tau, n_cells=64):
        """Total mass: sum of |atom weights| plus the integral of |density|."""
        atom_mass = sum(np.abs(np.asarray(w, dtype=float)) for _, w in self.atoms) if self.atoms else 0.0
        if self.density is None or tau == 0:
            return atom_mass
        if not callable(self.density):
            return atom_mass + abs(self.density) * tau
        offs = Grid1D(-tau, 0.0, n_cells).nodes
        return atom_mass + np.trapezoid(np.abs(self._density_samples(offs)), offs, axis=-1)

    def distance(self, other: "RenewalFunctional", tau, n_cells=64):
        """Functional-norm distance, matching atoms by offset."""
        diff = {}
        for s, w in self.atoms:
            diff[float(s)] = diff.get(float(s), 0.0) + np.asarray(w, dtype=float)
        for s, w in other.atoms:
            diff[float(s)] = diff.get(float(s), 0.0) - np.asarray(w, dtype=float)
        d = sum(np.abs(v) for v in diff.values()) if diff else 0.0
        if tau > 0 and (self.density is not None or other.density is not None):
            offs = Grid1D(-tau, 0.0, n_cells).nodes
            dd = self._density_samples(offs) - other._density_samples(offs)
            d = d + np.trapezoid(np.abs(dd) * np.ones_like(offs), offs, axis=-1)
        return d


ZERO_FUNCTIONAL = RenewalFunctional()

_TIME_FUNCTIONS = ("c_hat", "L_c", "L_lambda", "L_W", "M_lambda", "M_W")


@dataclass(frozen=True)
class AssumptionConstants:
    """Bounds and Lipschitz moduli of a model.

    The entries named in ``_TIME_FUNCTIONS`` may be floats (the constant
    realization) or vectorized callables of ``t``.
    """

    c_hat: float | Callable
    eps0: float
    kappa: float
    L_phi: float
    L_c: float | Callable = 0.0
    L_lambda: float | Callable = 0.0
    L_W: float | Callable = 0.0
    L_K: float = 0.0
    M_lambda: float | Callable = 0.0
    M_W: float | Callable = 0.0
    phi_sup: float = 0.0
    phi_inf1: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eps0 < 1.0:
            raise ModelError(f"eps0 must lie in (0, 1), got {self.eps0}")
        for f in fields(self):
            v = getattr(self, f.name)
            if not callable(v) and (not math.isfinite(v) or v < 0):
                raise ModelError(f"constant {f.name} must be finite and nonnegative, got {v}")

    def fn(self, name):
        v = getattr(self, name)
        if callable(v):
            return v
        return lambda t, _v=float(v): np.full(np.shape(t), _v) if np.ndim(t) else _v

    def at(self, name, t):
        return self.fn(name)(t)

    def integral(self, name, t1, t0=0.0):
        """``int_{t0}^{t1}`` of a time function (closed form when constant)."""
        v = getattr(self, name)
        if not callable(v):
            return float(v) * (np.asarray(t1, dtype=float) - t0)
        t1 = np.asarray(t1, dtype=float)
        vals = [integrate.quad(v, t0, float(tt), limit=200)[0] for tt in t1.ravel()]
        out = np.asarray(vals).reshape(t1.shape)
        return out if out.ndim else float(out)

    def ratio_sup(self, name, a, n=2001):
        """``sup_[0,a] f / c_hat``."""
        f, ch = getattr(self, name), self.c_hat
        if not callable(f) and not callable(ch):
            return float(f) / float(ch) if ch > 0 else (0.0 if f == 0 else math.inf)
        t = np.linspace(0.0, a, n)
        num, den = self.at(name, t), self.at("c_hat", t)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(num == 0, 0.0, num / den)
        return float(np.max(r))

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class ModelSpec:
    """An immutable problem instance."""

    c: Callable
    lam: Callable
    phi: Callable
    tau: float
    a: float
    x_max: float
    kernel: Callable | None = None
    dc_dx: Callable | None = None
    constants: AssumptionConstants | None = None
    conservative: bool = False
    name: str = "custom"
    fd_step: float | None = None
    tail_tol: float = 1e-10
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.tau < 0:
            raise ModelError(f"tau must be >= 0, got {self.tau}")
        if self.a <= 0 or self.x_max <= 0:
            raise ModelError("a and x_max must be positive")

    @property
    def h_x(self) -> float:
        return self.fd_step if self.fd_step is not None else 1e-4 * self.x_max

    def K(self, t, x) -> RenewalFunctional:
        if self.kernel is None:
            return ZERO_FUNCTIONAL
        return self.kernel(t, x)


def _check_finite(values, what, t, x):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values * np.ones(np.broadcast_shapes(values.shape, np.shape(x)))))
        idx = tuple(bad[0]) if len(bad) else ()
        xb = np.asarray(x)[idx] if np.ndim(x) and idx else x
        raise ModelError(f"{what} is not finite at t={t!r}, x={float(np.asarray(xb).ravel()[0])!r}")
    return values


def speed_gradient(model: ModelSpec, t, x, q):
    """``d c / d x``: exact when supplied, otherwise a central difference.

    Points closer than one step to ``x = 0`` use a second-order one-sided
    difference.
    """
    if model.dc_dx is not None:
        return model.dc_dx(t, x, q)
    h = model.h_x
    x = np.asarray(x, dtype=float)
    central = (np.asarray(model.c(t, x + h, q)) - np.asarray(model.c(t, np.maximum(x - h, 0.0), q))) / (2 * h)
    if np.any(x - h < 0):
        one_sided = (-3 * np.asarray(model.c(t, x, q)) + 4 * np.asarray(model.c(t, x + h, q))
                     - np.asarray(model.c(t, x + 2 * h, q))) / (2 * h)
        central = np.where(x - h < 0, one_sided, central)
    return central if central.ndim else float(central)


def eval_W(model: ModelSpec, t, x, w, q):
    """``W = lambda + dc/dx``, the rate of the conservative form."""
    out = np.asarray(model.lam(t, x, w, q)) + np.asarray(speed_gradient(model, t, x, q))
    _check_finite(out, "W", t, x)
    return out if out.ndim else float(out)


@dataclass
class ConsistencyReport:
    passed: bool
    residual: float
    phi00: float
    renewal: float
    tol: float

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (f"consistency {verdict}: phi(0,0)={self.phi00:.12g}, renewal integral={self.renewal:.12g}, "
                f"residual={self.residual:.3e} (tol {self.tol:g})")


def validate_consistency(model: ModelSpec, tol=1e-6, n_per_unit=10_000, history_cells=64) -> ConsistencyReport:
    """Check ``phi(0, 0) == int K(0, x)[phi(., x)] dx`` on a fine trapezoid grid."""
    grid = Grid1D(0.0, model.x_max, max(2, int(round(model.x_max * n_per_unit))))
    x = grid.nodes
    offsets = np.zeros(1) if model.tau == 0 else Grid1D(-model.tau, 0.0, history_cells).nodes
    try:
        phi00 = float(model.phi(0.0, 0.0))
        seg = FunctionHistory(model.phi, x, offsets)
        integrand = np.asarray(model.K(0.0, x).apply(seg), dtype=float) * np.ones_like(x)
    except ModelError:
        raise
    except Exception as exc:  # evaluator failure
        raise ModelError(f"evaluator failed during consistency check at t=0: {exc}") from exc
    _check_finite(integrand, "renewal integrand", 0.0, x)
    renewal = float(quad_composite(integrand, grid=grid))
    residual = abs(phi00 - renewal) / max(1.0, abs(phi00))
    return ConsistencyReport(residual <= tol, residual, phi00, renewal, tol)


@dataclass
class Violation:
    check: str
    value: float
    bound: float
    t: float = math.nan
    x: float = math.nan
    detail: str = ""

    def __str__(self):
        loc = f" at t={self.t:.6g}, x={self.x:.6g}" if not math.isnan(self.t) else ""
        extra = f" ({self.detail})" if self.detail else ""
        return f"{self.check}: observed {self.value:.6g} against bound {self.bound:.6g}{loc}{extra}"


@dataclass(frozen=True)
class SamplingPlan:
    """Randomized probes for :func:`estimate_constants`."""

    n_probes: int = 400
    seed: int = 0
    history_cells: int = 16
    segment_scale: float | None = None
    rel_step: tuple = (1e-4, 1e-1)
    rtol: float = 1e-6
    phi_cells_per_unit: int = 200


@dataclass
class ConstantsReport:
    constants: AssumptionConstants
    violations: list
    declared: AssumptionConstants | None

    @property
    def ok(self):
        return not self.violations

    def summary(self):
        lines = ["estimated constants:"]
        for f in fields(self.constants):
            v = getattr(self.constants, f.name)
            lines.append(f"  {f.name:9s} = {v if callable(v) else f'{v:.6g}'}")
        if self.violations:
            lines.append(f"{len(self.violations)} violation(s):")
            lines.extend(f"  {v}" for v in self.violations[:50])
        else:
            lines.append("no violations")
        return "\n".join(lines)


def _random_segment(rng, offsets, scale):
    tau = -offsets[0]
    a0, a1, a2 = rng.uniform(0, 1), rng.uniform(-0.5, 0.5), rng.uniform(0, 0.3)
    shape = a0 + (a1 * offsets / tau if tau > 0 else 0.0) + a2 * np.sin(rng.uniform(1, 6) * offsets + rng.uniform(0, 6))
    return scale * np.clip(shape, 0.0, None)


def _phi_constants(model: ModelSpec, plan: SamplingPlan):
    grid = Grid1D(0.0, model.x_max, max(2, int(round(model.x_max * plan.phi_cells_per_unit))))
    x = grid.nodes
    ts = np.zeros(1) if model.tau == 0 else Grid1D(-model.tau, 0.0, plan.history_cells).nodes
    vals = np.asarray(model.phi(ts[:, None], x[None, :]), dtype=float) * np.ones((len(ts), len(x)))
    sup_t = vals.max(axis=0)
    slope = np.abs(np.diff(vals, axis=1)).max() / grid.h
    tail_x = Grid1D(model.x_max, 2 * model.x_max, len(x) - 1).nodes
    tail_vals = np.asarray(model.phi(ts[:, None], tail_x[None, :]), dtype=float) * np.ones((len(ts), len(tail_x)))
    tail = float(quad_composite(tail_vals.max(axis=0), h=model.x_max / (len(x) - 1)))
    return vals, float(vals.max()), float(quad_composite(sup_t, grid=grid)), float(slope), tail


def estimate_constants(model: ModelSpec, plan: SamplingPlan | None = None) -> ConstantsReport:
    """Estimate the assumption constants by random probing and compare them
    against the model's declared constants.

    Estimates are maxima of observed difference quotients and magnitudes;
    they are lower bounds on the true constants, so a declared constant
    below an estimate is a certain violation.
    """
    plan = plan or SamplingPlan()
    rng = np.random.default_rng(plan.seed)
    decl = model.constants
    tau, a, xm = model.tau, model.a, model.x_max
    offsets = np.zeros(1) if tau == 0 else Grid1D(-tau, 0.0, plan.history_cells).nodes
    violations = []

    phi_vals, phi_sup, phi_inf1, L_phi, tail = _phi_constants(model, plan)
    if np.any(phi_vals < 0):
        violations.append(Violation("phi_nonnegative", float(-phi_vals.min()), 0.0, detail="initial data negative"))
    if tail > model.tail_tol:
        violations.append(Violation("phi_tail", tail, model.tail_tol, detail="initial mass beyond x_max"))
    scale = plan.segment_scale or 2.0 * max(1.0, phi_sup, phi_inf1)

    def c_hat_at(t):
        return decl.at("c_hat", t) if decl is not None else None

    def seg(values):
        return HistorySegment(offsets, values)

    c_max = 0.0
    M_lam = M_W = 0.0
    L_c = L_lam = L_W = 0.0
    kappa = L_K = 0.0
    wedge_ratio = math.inf
    records = []  # (t, x, c, lam, W, Lc_q, Llam_q, LW_q)
    lo, hi = plan.rel_step
    for k in range(plan.n_probes):
        t = float(rng.uniform(0, a))
        q = seg(_random_segment(rng, offsets, scale))
        w = seg(_random_segment(rng, offsets, scale))
        ch = c_hat_at(t)
        if k % 2 == 0 and ch is not None:
            x = float(rng.uniform(0, min(xm, decl.integral("c_hat", t))))
        elif k % 4 == 1:
            x = float(rng.uniform(0, 0.05 * xm))
        else:
            x = float(rng.uniform(0, xm))
        try:
            cv = float(model.c(t, x, q))
            lv = float(model.lam(t, x, w, q))
            Wv = float(eval_W(model, t, x, w, q))
        except ModelError:
            raise
        except Exception as exc:
            raise ModelError(f"evaluator failed at t={t!r}, x={x!r}: {exc}") from exc
        for what, v in (("c", cv), ("lambda", lv)):
            if not math.isfinite(v):
                raise ModelError(f"{what} not finite at t={t!r}, x={x!r}")
        if cv < 0:
            violations.append(Violation("c_nonnegative", -cv, 0.0, t, x, "negative speed"))
        # perturbed probe for Lipschitz quotients
        step = rng.uniform(lo, hi)
        dx = step * xm * rng.uniform(-0.05, 0.05)
        xb = min(max(x + dx, 0.0), xm)
        qb = seg(np.clip(q.values + step * scale * rng.uniform(-1, 1) * np.cos(offsets * rng.uniform(0, 4)), 0.0, None))
        wb = seg(np.clip(w.values + step * scale * rng.uniform(-1, 1) * np.cos(offsets * rng.uniform(0, 4)), 0.0, None))
        dq = float(np.max(np.abs(qb.values - q.values)))
        dw = float(np.max(np.abs(wb.values - w.values)))
        dist_c = abs(xb - x) + dq
        dist_l = abs(xb - x) + dq + dw
        Lc_q = abs(float(model.c(t, xb, qb)) - cv) / dist_c if dist_c > 0 else 0.0
        Ll_q = abs(float(model.lam(t, xb, wb, qb)) - lv) / dist_l if dist_l > 0 else 0.0
        LW_q = abs(float(eval_W(model, t, xb, wb, qb)) - Wv) / dist_l if dist_l > 0 else 0.0
        c_max, M_lam, M_W = max(c_max, abs(cv)), max(M_lam, abs(lv)), max(M_W, abs(Wv))
        L_c, L_lam, L_W = max(L_c, Lc_q), max(L_lam, Ll_q), max(L_W, LW_q)
        records.append((t, x, cv, lv, Wv, Lc_q, Ll_q, LW_q))

        Kf = model.K(t, x)
        kappa = max(kappa, float(Kf.norm(tau)))
        tb = min(max(t + step * a * rng.uniform(-0.1, 0.1), 0.0), a)
        Kb = model.K(tb, xb)
        ch_int = abs(decl.integral("c_hat", tb, t)) if decl is not None else abs(tb - t) * max(c_max, 1e-300)
        dK = float(Kf.distance(Kb, tau))
        if dK > 0:
            L_K = max(L_K, dK / max(ch_int + abs(xb - x), 1e-300))

    # speed lower bound near the boundary
    c_hat_est = c_max
    for (t, x, cv, *_rest) in records:
        ch = c_hat_at(t) if decl is not None else c_hat_est
        wedge = decl.integral("c_hat", t) if decl is not None else c_hat_est * t
        if x <= wedge and ch > 0:
            wedge_ratio = min(wedge_ratio, cv / ch)
            if cv <= 0:
                violations.append(Violation("c_lower_bound", cv, 0.0, t, x,
                                            "speed must be strictly positive near the lateral boundary"))
    # boundary line x = 0 is always inside the wedge
    for t in np.linspace(0.0, a, 9):
        q = seg(_random_segment(rng, offsets, scale))
        cv = float(model.c(float(t), 0.0, q))
        ch = c_hat_at(float(t)) if decl is not None else c_hat_est
        if ch and ch > 0:
            wedge_ratio = min(wedge_ratio, cv / ch)
        if cv <= 0:
            violations.append(Violation("c_lower_bound", cv, 0.0, float(t), 0.0,
                                        "speed must be strictly positive near the lateral boundary"))

    eps_est = min(max(wedge_ratio if math.isfinite(wedge_ratio) else 0.999, 1e-12), 0.999)
    est = AssumptionConstants(
        c_hat=c_hat_est, eps0=eps_est, kappa=kappa, L_phi=L_phi, L_c=L_c, L_lambda=L_lam, L_W=L_W,
        L_K=L_K, M_lambda=M_lam, M_W=M_W, phi_sup=phi_sup, phi_inf1=phi_inf1)

    if decl is not None:
        rt = plan.rtol

        def exceeds(v, b):
            return v > b * (1 + rt) + 1e-12

        for (t, x, cv, lv, Wv, Lc_q, Ll_q, LW_q) in records:
            pairs = (("c_hat", abs(cv)), ("M_lambda", abs(lv)), ("M_W", abs(Wv)),
                     ("L_c", Lc_q), ("L_lambda", Ll_q), ("L_W", LW_q))
            for name, v in pairs:
                b = float(decl.at(name, t))
                if exceeds(v, b):
                    violations.append(Violation(name, v, b, t, x))
            ch = float(decl.at("c_hat", t))
            if x <= decl.integral("c_hat", t) and cv < decl.eps0 * ch * (1 - rt) - 1e-12:
                violations.append(Violation("c_lower_bound", cv, decl.eps0 * ch, t, x,
                                            "speed below eps0 * c_hat near the lateral boundary"))
        for name, v in (("kappa", kappa), ("L_K", L_K), ("phi_sup", phi_sup), ("L_phi", L_phi)):
            b = getattr(decl, name)
            if exceeds(v, b):
                violations.append(Violation(name, v, b))
        # trapezoid value of the sup-envelope carries O(h^2) quadrature error
        if phi_inf1 > decl.phi_inf1 * (1 + 1e-3) + 1e-12:
            violations.append(Violation("phi_inf1", phi_inf1, decl.phi_inf1))
    return ConstantsReport(est, violations, decl)
