"""Shared numeric kernels: fixed-step RK4, trapezoid quadrature, linear
interpolation and bracketing root finding.

All kernels are pure and deterministic. Arrays are accepted wherever a
scalar would be, so the same routine drives single characteristics and
whole families of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize


class NumericsError(ValueError):
    """Raised when a kernel meets non-finite data or an invalid bracket."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid ``lo + k*h`` for ``k = 0..n``."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Grid1D needs n >= 1, got {self.n}")
        if not self.hi > self.lo:
            raise ValueError(f"Grid1D needs hi > lo, got [{self.lo}, {self.hi}]")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n

    def node(self, k):
        # computed from k, never by repeated addition
        return self.lo + np.asarray(k) * self.h

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + np.arange(self.n + 1) * self.h

    def __len__(self):
        return self.n + 1


def rk4_step(f, s, y, h):
    """One classical RK4 step of size ``h`` (may be negative)."""
    k1 = f(s, y)
    k2 = f(s + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(s + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(s + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_ode_rk4(f, s0, y0, s1, steps):
    """Integrate ``dy/ds = f(s, y)`` from ``s0`` to ``s1`` with fixed-step RK4.

    ``s1 < s0`` integrates backward. ``y0`` may be an array; ``f`` must then
    return an array of the same shape.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    h = (s1 - s0) / steps
    y = np.asarray(y0, dtype=float)
    for k in range(steps):
        y = rk4_step(f, s0 + k * h, y, h)
        if not np.all(np.isfinite(y)):
            raise NumericsError(f"non-finite RK4 state at step {k} (s={s0 + k * h!r})")
    return y if y.ndim else float(y)


def quad_composite(values, h=None, *, grid: Grid1D | None = None, axis=-1):
    """Composite trapezoid rule over uniformly spaced samples.

    Pass either the spacing ``h`` or the ``grid`` the samples live on.
    """
    values = np.asarray(values, dtype=float)
    if grid is not None:
        h = grid.h
        if values.shape[axis] != len(grid):
            raise ValueError("sample count does not match grid")
    if h is None:
        raise ValueError("need h or grid")
    if values.shape[axis] < 2:
        raise ValueError("trapezoid needs at least two nodes")
    if not np.all(np.isfinite(values)):
        raise NumericsError("non-finite integrand samples")
    return np.trapezoid(values, dx=h, axis=axis)


def trapezoid_weights(n_nodes, h):
    """Weights ``w`` with ``w @ f`` equal to the composite trapezoid rule."""
    w = np.full(n_nodes, h)
    if n_nodes == 1:
        return np.zeros(1)
    w[0] = w[-1] = 0.5 * h
    return w


def interp_linear(grid: Grid1D, values, q, *, clamp_tol=0.0):
    """Piecewise-linear interpolation of nodal ``values`` at points ``q``.

    Points up to ``clamp_tol`` outside the grid hull are clamped to the end
    values; anything further out is an error.
    """
    values = np.asarray(values, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(q < grid.lo - clamp_tol) or np.any(q > grid.hi + clamp_tol):
        raise NumericsError(f"query outside [{grid.lo}, {grid.hi}] beyond clamp tolerance {clamp_tol}")
    pos = (np.clip(q, grid.lo, grid.hi) - grid.lo) / grid.h
    k = np.minimum(np.floor(pos).astype(np.intp), grid.n - 1)
    theta = pos - k
    out = (1.0 - theta) * values[k] + theta * values[k + 1]
    return out if out.ndim else float(out)


def interp_bilinear(grid_t: Grid1D, grid_x: Grid1D, values, tq, xq, *, clamp_tol=0.0):
    """Bilinear interpolation on a tensor grid; ``values[i, j]`` at (t_i, x_j)."""
    values = np.asarray(values, dtype=float)
    tq, xq = np.broadcast_arrays(np.asarray(tq, dtype=float), np.asarray(xq, dtype=float))
    for g, q in ((grid_t, tq), (grid_x, xq)):
        if np.any(q < g.lo - clamp_tol) or np.any(q > g.hi + clamp_tol):
            raise NumericsError("bilinear query outside grid beyond clamp tolerance")
    pt = (np.clip(tq, grid_t.lo, grid_t.hi) - grid_t.lo) / grid_t.h
    px = (np.clip(xq, grid_x.lo, grid_x.hi) - grid_x.lo) / grid_x.h
    i = np.minimum(np.floor(pt).astype(np.intp), grid_t.n - 1)
    j = np.minimum(np.floor(px).astype(np.intp), grid_x.n - 1)
    a, b = pt - i, px - j
    out = ((1 - a) * (1 - b) * values[i, j] + a * (1 - b) * values[i + 1, j]
           + (1 - a) * b * values[i, j + 1] + a * b * values[i + 1, j + 1])
    return out if out.ndim else float(out)


def bisect_root(g, lo, hi, tol=1e-12):
    """Root of ``g`` in ``[lo, hi]`` by bisection; ``g(lo)*g(hi) <= 0`` required."""
    glo, ghi = g(lo), g(hi)
    if not (math.isfinite(glo) and math.isfinite(ghi)):
        raise NumericsError("non-finite function value at bracket end")
    if glo == 0.0:
        return float(lo)
    if ghi == 0.0:
        return float(hi)
    if glo * ghi > 0:
        raise NumericsError(f"no sign change on [{lo}, {hi}]: g(lo)={glo}, g(hi)={ghi}")
    return float(optimize.bisect(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
