"""The fixed-point operator ``(u, z) -> (u~, z~)`` and its Picard iteration.

The operator is assembled from two families of characteristics traced
forward through the frozen iterate: one leaving every node of the initial
line ``t = 0`` and one leaving the boundary ``x = 0`` at every time node.
Along each curve the growth exponents ``int lambda`` and ``int W`` are
accumulated by the trapezoid rule on the RK4 sub-step ladder. At each
new time level the boundary value is obtained from the Volterra renewal
equation written over those two families, and the interior row is read
off the curve values by linear interpolation in ``x``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .characteristics import INITIAL, march, trace_path
from .field import (DensityField, SeriesHistory, SpaceTimeGrid, TotalSizeTrace,
                    total_size_trace)
from .model import AssumptionConstants, ModelError, ModelSpec, speed_gradient
from .numerics import trapezoid_weights

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


def make_grid(model: ModelSpec, nt_per_unit=200, nx_per_unit=200, m_h=None) -> SpaceTimeGrid:
    return SpaceTimeGrid.from_resolution(model.a, model.tau, model.x_max, nt_per_unit, nx_per_unit, m_h)


def phi_rows(model: ModelSpec, grid: SpaceTimeGrid) -> np.ndarray:
    """Initial data sampled on the history rows (t in [-tau, 0])."""
    t = grid.times[: grid.i0 + 1, None]
    vals = np.asarray(model.phi(t, grid.x[None, :]), dtype=float)
    return vals * np.ones((grid.i0 + 1, grid.n_x + 1))


def initial_guess(model: ModelSpec, grid: SpaceTimeGrid):
    """``u = phi`` on the strip, ``phi(0, .)`` held constant for t > 0."""
    strip = phi_rows(model, grid)
    vals = np.empty(grid.shape)
    vals[: grid.i0 + 1] = strip
    vals[grid.i0 + 1:] = strip[-1]
    u = DensityField(grid, vals)
    return u, total_size_trace(u)


@dataclass(frozen=True)
class BieleckiWeight:
    """``B(t) = exp(C int_0^t c_hat)`` for t > 0 and 1 on the history strip."""

    C: float
    constants: AssumptionConstants

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("weight constant C must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        tp = np.maximum(t, 0.0)
        out = np.exp(self.C * np.asarray(self.constants.integral("c_hat", tp)))
        out = np.where(t <= 0, 1.0, out)
        return out if out.ndim else float(out)


def bielecki_distance(p1, p2, weight: BieleckiWeight) -> float:
    """``max(|du| / B, |dz| / B)`` over all grid nodes."""
    (u1, z1), (u2, z2) = p1, p2
    if not (u1.grid == u2.grid == z1.grid == z2.grid):
        raise ValueError("pairs live on different grids")
    B = weight(u1.grid.times)
    du = np.max(np.abs(u1.values - u2.values) / B[:, None])
    dz = np.max(np.abs(z1.values - z2.values) / B)
    return float(max(du, dz))


@dataclass
class OperatorResult:
    """Image ``(u~, z~)`` plus by-products of the construction."""

    u: DensityField
    z: TotalSizeTrace
    boundary: np.ndarray        # u~(t, 0) on every time node
    z_transport: np.ndarray     # z~ from the boundary-influx + transported-mass formula, forward nodes
    eta0: np.ndarray            # critical curve at forward nodes
    max_sweeps: int = 0
    # last-level curve data, kept for continuity checks
    initial_positions: np.ndarray | None = None
    initial_values: np.ndarray | None = None
    boundary_positions: np.ndarray | None = None
    boundary_values: np.ndarray | None = None


def corner_gap(result: OperatorResult, grid: SpaceTimeGrid) -> float:
    """Jump across the critical curve, relative to ``max(1, u(0, 0))``.

    Points just left of ``eta_0`` take the boundary value at ``alpha -> 0+``
    (linear extrapolation of the boundary trace from the first two forward
    nodes); points just right take ``phi(0, 0)``. Both are carried by the
    same exponential along ``eta_0``, so the jump is the difference of the
    two starting values.
    """
    b = result.boundary[grid.i0:]
    if len(b) < 3:
        raise ValueError("need at least two forward steps")
    lim = 2.0 * b[1] - b[2]
    return float(abs(lim - b[0]) / max(1.0, abs(b[0])))


def _apply_functional(model, t, x, seg):
    return np.asarray(model.K(t, x).apply(seg), dtype=float)


def apply_operator(model: ModelSpec, u: DensityField, z: TotalSizeTrace, *, n_sub=4,
                   sweep_tol=1e-13, max_sweeps=50) -> OperatorResult:
    """One application of the fixed-point operator.

    ``n_sub`` RK4 sub-steps per time step carry the characteristics; the
    implicit diagonal term of the renewal equation is settled by at most
    ``max_sweeps`` fixed-point passes.
    """
    g = u.grid
    if z.grid != g:
        raise ValueError("u and z live on different grids")
    N, i0 = g.n_t, g.i0
    xs = g.x
    tf = g.forward.nodes
    dt = g.dt
    nx1 = g.n_x + 1

    strip = phi_rows(model, g)
    out = np.empty(g.shape)
    out[: i0 + 1] = strip
    phi_field = DensityField(g, np.vstack([strip, np.repeat(strip[-1:], N, axis=0)]))
    phi_segs = phi_field.history(0.0, xs)
    phi0 = strip[-1]
    wy = trapezoid_weights(nx1, g.dx)

    # boundary series on [-tau, a]; forward entries fill in as we march
    bseries = np.zeros(len(g.times))
    bseries[: i0 + 1] = strip[:, 0]
    has_kernel = model.kernel is not None

    def rates(s, pos):
        q = z.history(s)
        w = u.history(s, pos)
        lam = np.asarray(model.lam(s, pos, w, q), dtype=float) * np.ones_like(pos)
        W = lam + np.asarray(speed_gradient(model, s, pos, q), dtype=float)
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(W))):
            raise ModelError(f"growth rate not finite along characteristics at s={s!r}")
        return lam, W

    def c_boundary(s):
        return float(np.asarray(model.c(s, 0.0, z.history(s))))

    # curve state: first nx1 entries are the initial family, then boundary curves m = 0..k
    pos = np.concatenate([xs, [0.0]])
    Lam = np.zeros(nx1 + 1)
    Aw = np.zeros(nx1 + 1)
    lam_now, W_now = rates(0.0, pos)
    c_b = [c_boundary(0.0)]
    b = np.empty(N + 1)
    b[0] = strip[-1, 0]
    z_tr = np.empty(N + 1)
    z_tr[0] = float(wy @ phi0)
    eta0 = np.empty(N + 1)
    eta0[0] = 0.0
    worst = 0
    vals_i = vals_b = None

    for k in range(N):
        s0, s1 = tf[k], tf[k + 1]
        h = (s1 - s0) / n_sub
        ladder = march(model, z, pos, s0, s1, n_sub)
        next(ladder)
        for s, p in ladder:
            lam_new, W_new = rates(s, p)
            Lam += 0.5 * h * (lam_now + lam_new)
            Aw += 0.5 * h * (W_now + W_new)
            lam_now, W_now = lam_new, W_new
            pos = p
        # newborn boundary curve at (s1, 0)
        lam_b, W_b = rates(s1, np.zeros(1))
        pos = np.concatenate([pos, [0.0]])
        Lam = np.concatenate([Lam, [0.0]])
        Aw = np.concatenate([Aw, [0.0]])
        lam_now = np.concatenate([lam_now, lam_b])
        W_now = np.concatenate([W_now, W_b])
        c_b.append(c_boundary(s1))
        cb = np.asarray(c_b)

        pos_i, pos_b = pos[:nx1], pos[nx1:]          # pos_b[m], m = 0..k+1
        A_i, A_b = Aw[:nx1], Aw[nx1:]
        eta0[k + 1] = pos_i[0]

        # renewal equation at s1
        row = i0 + k + 1
        if has_kernel:
            wxi = trapezoid_weights(k + 2, dt)
            seg_b = SeriesHistory(g.times[:row + 1], bseries[:row + 1], tf[: k + 1], g.offsets)
            Kb = _apply_functional(model, s1, pos_b[: k + 1], seg_b)
            rest = float(np.sum(wxi[: k + 1] * Kb * cb[: k + 1] * np.exp(A_b[: k + 1])))
            Ki = _apply_functional(model, s1, pos_i, phi_segs)
            rest += float(wy @ (Ki * np.exp(A_i)))
            Kdiag = model.K(s1, 0.0)
            coef = wxi[-1] * cb[-1]
            bv = b[k]
            for sweep in range(1, max_sweeps + 1):
                bseries[row] = bv
                seg_d = SeriesHistory(g.times[:row + 1], bseries[:row + 1], s1, g.offsets)
                new = rest + coef * float(np.asarray(Kdiag.apply(seg_d)))
                done = abs(new - bv) <= sweep_tol * max(1.0, abs(new))
                bv = new
                if done:
                    break
            else:
                raise SolverError(
                    f"renewal diagonal did not settle in {max_sweeps} passes at t={s1!r}; "
                    "refine the time step")
            worst = max(worst, sweep)
            b[k + 1] = bv
        else:
            b[k + 1] = 0.0
        bseries[row] = b[k + 1]

        # interior row from curve values
        vals_i = phi0 * np.exp(Lam[:nx1])
        vals_b = b[: k + 2] * np.exp(Lam[nx1:])
        right = xs >= pos_i[0]
        r = np.empty(nx1)
        r[right] = np.interp(xs[right], pos_i, vals_i)
        if np.any(~right):
            r[~right] = np.interp(xs[~right], pos_b[::-1], vals_b[::-1])
        out[row] = r

        z_tr[k + 1] = float(np.sum(trapezoid_weights(k + 2, dt) * b[: k + 2] * cb * np.exp(A_b))
                            + wy @ (phi0 * np.exp(A_i)))

    u_new = DensityField(g, out)
    u_new.clamp_negative()
    z_new = total_size_trace(u_new)
    boundary = bseries.copy()
    boundary[i0:] = b
    return OperatorResult(u_new, z_new, boundary, z_tr, eta0, worst,
                          pos[:nx1].copy(), vals_i, pos[nx1:].copy(), vals_b)


def solve_renewal_boundary(model: ModelSpec, u: DensityField, z: TotalSizeTrace, **kw) -> np.ndarray:
    """Boundary trace ``u~(t, 0)`` on the forward time nodes.

    The renewal equation is marched in time together with the curve
    families, so this runs the full operator and keeps the boundary.
    """
    img = apply_operator(model, u, z, **kw)
    return img.boundary[u.grid.i0:]


def operator_at_point(model: ModelSpec, u: DensityField, z: TotalSizeTrace, boundary, t, x,
                      dt_sub=None):
    """Evaluate ``u~(t, x)`` by tracing the single characteristic through (t, x).

    Independent of :func:`apply_operator`'s curve families; ``boundary``
    is the boundary trace ``u~(., 0)`` on the grid times, interpolated
    linearly at the entry time.
    """
    g = u.grid
    path = trace_path(model, z, t, x, dt_sub)
    ent = path.entry
    lam = np.array([float(np.asarray(model.lam(s, e, u.history(s, e), z.history(s))))
                    for s, e in zip(path.s, path.eta)])
    expo = float(np.trapezoid(lam, path.s)) if len(path.s) > 1 else 0.0
    if ent.origin == INITIAL:
        start = float(np.asarray(model.phi(0.0, ent.eta_alpha)))
    else:
        start = float(np.interp(ent.alpha, g.times, boundary))
    return start * math.exp(expo), ent


@dataclass
class IterationReport:
    residuals: list = field(default_factory=list)
    ratios: list = field(default_factory=list)        # ratios[k] = r_k / r_{k-1}; None for k = 0
    sup_residuals: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    wall_time: float = 0.0
    status: str = "running"
    message: str = ""
    C: float = math.nan

    @property
    def measured_ratios(self):
        return [r for r in self.ratios if r is not None]

    def convergence_rows(self):
        for k, (res, rat) in enumerate(zip(self.residuals, self.ratios), start=1):
            yield k, res, rat


@dataclass
class PicardResult:
    u: DensityField
    z: TotalSizeTrace
    report: IterationReport
    image: OperatorResult
    weight: BieleckiWeight

    @property
    def boundary(self):
        return self.image.boundary

    @property
    def converged(self):
        return self.report.converged


def default_weight_constant(constants: AssumptionConstants, a, target_theta=0.5, max_log_weight=8.0):
    """Weight constant ``C`` for ``B(t) = exp(C int c_hat)``.

    A Lipschitz-times-magnitude estimate of the operator's growth divided
    by the target contraction factor, clipped so that ``B(a) <= e**8``.
    """
    ch_int = float(constants.integral("c_hat", a))
    if ch_int <= 0:
        return 1.0
    lip = sum(constants.ratio_sup(n, a) for n in ("L_c", "L_lambda", "L_W"))
    grow = (constants.kappa * ch_int + float(constants.integral("M_W", a))
            + float(constants.integral("M_lambda", a)))
    mag = max(1.0, constants.phi_sup, constants.phi_inf1) * math.exp(min(grow, 700.0))
    est = lip * mag * (1.0 + constants.kappa) / target_theta
    return float(min(max(est, 1.0), max_log_weight / ch_int))


def picard_solve(model: ModelSpec, grid: SpaceTimeGrid | None = None, *, C=None, tol=1e-8,
                 max_iter=50, initial=None, constants: AssumptionConstants | None = None,
                 n_sub=4, diverge_patience=3) -> PicardResult:
    """Iterate the operator to its fixed point under the Bielecki norm.

    Stops when successive iterates are within ``tol``; returns a
    non-converged result after ``max_iter`` iterations, or earlier when the
    measured ratio stays ``>= 1`` for ``diverge_patience`` iterations.
    """
    grid = grid or make_grid(model)
    constants = constants or model.constants
    if constants is None:
        from .model import estimate_constants
        constants = estimate_constants(model).constants
    if C is None:
        C = default_weight_constant(constants, model.a)
    weight = BieleckiWeight(float(C), constants)
    u, z = initial if initial is not None else initial_guess(model, grid)
    report = IterationReport(C=float(C))
    t0 = time.perf_counter()
    streak = 0
    img = None
    for it in range(1, max_iter + 1):
        img = apply_operator(model, u, z, n_sub=n_sub)
        res = bielecki_distance((img.u, img.z), (u, z), weight)
        sup = float(max(np.max(np.abs(img.u.values - u.values)), np.max(np.abs(img.z.values - z.values))))
        prev = report.residuals[-1] if report.residuals else None
        ratio = None if not prev else res / prev
        report.residuals.append(res)
        report.sup_residuals.append(sup)
        report.ratios.append(ratio)
        report.iterations = it
        u, z = img.u, img.z
        log.debug("picard %d: residual %.3e ratio %s", it, res, ratio)
        if res <= tol:
            report.converged, report.status = True, "converged"
            break
        streak = streak + 1 if (ratio is not None and ratio >= 1.0) else 0
        if streak >= diverge_patience:
            report.status = "diverging"
            report.message = (f"measured contraction ratio >= 1 for {streak} consecutive iterations "
                              f"(C={C:g}); try a larger weight constant C or a finer grid")
            log.warning(report.message)
            break
    else:
        report.status = "max_iter"
        report.message = f"not converged after {max_iter} iterations (last residual {report.residuals[-1]:.3e})"
    report.wall_time = time.perf_counter() - t0
    return PicardResult(u, z, report, img, weight)
