"""Storage of the density ``u`` and total size ``z`` on the space-time grid,
plus history segments (the delayed arguments ``u_t(., x)`` and ``z_t``).

A history segment is a nonnegative function on ``[-tau, 0]``. Evaluators
in a model only ever talk to segments through four methods::

    seg.at(s)      value at offset s in [-tau, 0]
    seg.mean()     average over [-tau, 0] (the value at 0 when tau == 0)
    seg.integral() integral over [-tau, 0]
    seg.values     samples on the offset grid, shape (..., m_h + 1)

Segments may be *batched*: ``at`` then returns one value per point. The
lazy variants below read straight from a field or a time series so that
evaluators pay only for the samples they actually use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .numerics import Grid1D, quad_composite


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grids on ``[-tau, 0]``, ``[0, a]`` and ``[0, x_max]``.

    ``m_h`` history cells, ``n_t`` forward cells and ``n_x`` space cells.
    ``m_h`` is 0 exactly when ``tau`` is 0.
    """

    a: float
    tau: float
    x_max: float
    n_t: int
    n_x: int
    m_h: int

    def __post_init__(self):
        if self.tau < 0 or self.a <= 0 or self.x_max <= 0:
            raise FieldError("need tau >= 0, a > 0, x_max > 0")
        if (self.tau == 0) != (self.m_h == 0):
            raise FieldError("m_h must be 0 exactly when tau is 0")

    @classmethod
    def from_resolution(cls, a, tau, x_max, nt_per_unit=200, nx_per_unit=200, m_h=None):
        n_t = max(1, int(round(a * nt_per_unit)))
        n_x = max(1, int(round(x_max * nx_per_unit)))
        if m_h is None:
            m_h = 0 if tau == 0 else max(8, int(round(tau * nt_per_unit)))
        return cls(float(a), float(tau), float(x_max), n_t, n_x, m_h)

    @property
    def forward(self) -> Grid1D:
        return Grid1D(0.0, self.a, self.n_t)

    @property
    def space(self) -> Grid1D:
        return Grid1D(0.0, self.x_max, self.n_x)

    @property
    def dt(self) -> float:
        return self.a / self.n_t

    @property
    def dx(self) -> float:
        return self.x_max / self.n_x

    @property
    def i0(self) -> int:
        """Row index of t = 0."""
        return self.m_h

    @cached_property
    def offsets(self) -> np.ndarray:
        if self.m_h == 0:
            return np.zeros(1)
        return Grid1D(-self.tau, 0.0, self.m_h).nodes

    @cached_property
    def times(self) -> np.ndarray:
        hist = self.offsets[:-1] if self.m_h else np.zeros(0)
        return np.concatenate([hist, self.forward.nodes])

    @cached_property
    def x(self) -> np.ndarray:
        return self.space.nodes

    @property
    def shape(self):
        return (len(self.times), self.n_x + 1)

    def locate(self, t):
        """Row index ``i`` and weight ``theta`` with t = (1-theta) t_i + theta t_{i+1}."""
        times = self.times
        t = np.asarray(t, dtype=float)
        if np.any(t < times[0] - 1e-12) or np.any(t > times[-1] + 1e-12):
            raise FieldError(f"time outside [{times[0]}, {times[-1]}]")
        if len(times) == 1:
            return np.zeros(t.shape, dtype=np.intp), np.zeros(t.shape)
        i = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)
        theta = np.clip((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0)
        return i, theta

    def same_as(self, other) -> bool:
        return self == other


def _trapz_cumulative(values, times, axis=0):
    """Cumulative trapezoid integral along ``axis`` starting at 0."""
    dt = np.diff(times)
    v = np.moveaxis(values, axis, 0)
    inc = 0.5 * (v[1:] + v[:-1]) * dt.reshape((-1,) + (1,) * (v.ndim - 1))
    out = np.concatenate([np.zeros((1,) + v.shape[1:]), np.cumsum(inc, axis=0)])
    return np.moveaxis(out, 0, axis)


def _antiderivative(times, values, cum, T):
    """Exact integral from times[0] to T of the piecewise-linear interpolant.

    ``values``/``cum`` have time on axis 0 and optional trailing axes that
    broadcast against ``T``.
    """
    T = np.asarray(T, dtype=float)
    if len(times) == 1:
        return np.zeros(np.broadcast_shapes(T.shape, values.shape[1:]))
    i = np.clip(np.searchsorted(times, T, side="right") - 1, 0, len(times) - 2)
    d = T - times[i]
    width = times[i + 1] - times[i]
    return cum[i] + d * values[i] + 0.5 * d * d * (values[i + 1] - values[i]) / width


class HistorySegment:
    """Samples of a nonnegative function on ``[-tau, 0]`` with linear interpolation."""

    def __init__(self, offsets, values):
        self.offsets = np.asarray(offsets, dtype=float)
        self._values = np.asarray(values, dtype=float)
        if self._values.shape[-1] != len(self.offsets):
            raise FieldError("segment samples do not match offset grid")

    @property
    def tau(self) -> float:
        return float(-self.offsets[0])

    @property
    def values(self) -> np.ndarray:
        return self._values

    def at(self, s):
        if self.tau == 0:
            return self.values[..., 0]
        s = float(s)
        if s < -self.tau - 1e-12 or s > 1e-12:
            raise FieldError(f"offset {s} outside [-{self.tau}, 0]")
        pos = (s + self.tau) / self.tau * (len(self.offsets) - 1)
        k = min(int(math.floor(pos)), len(self.offsets) - 2)
        th = pos - k
        v = self.values
        return (1 - th) * v[..., k] + th * v[..., k + 1]

    def integral(self):
        if self.tau == 0:
            return np.zeros(self.values.shape[:-1]) if self.values.ndim > 1 else 0.0
        return np.trapezoid(self.values, self.offsets, axis=-1)

    def mean(self):
        if self.tau == 0:
            return self.values[..., 0]
        return self.integral() / self.tau

    def sup(self):
        return np.max(self.values, axis=-1)

    def __repr__(self):
        return f"{type(self).__name__}(tau={self.tau}, shape={self.values.shape})"


class SeriesHistory(HistorySegment):
    """Segments ``s -> g(anchor + s)`` of a piecewise-linear time series ``g``.

    ``anchor`` may be an array, giving a batch of segments.
    """

    def __init__(self, times, series, anchor, offsets, cum=None):
        self.offsets = np.asarray(offsets, dtype=float)
        self.times = times
        self.series = series
        self.anchor = np.asarray(anchor, dtype=float)
        self._cum = cum

    @cached_property
    def values(self):
        pts = self.anchor[..., None] + self.offsets
        return np.interp(pts, self.times, self.series)

    def at(self, s):
        out = np.interp(self.anchor + s, self.times, self.series)
        return out if out.ndim else float(out)

    def integral(self):
        if self.tau == 0:
            return np.zeros(self.anchor.shape)
        cum = self._cum if self._cum is not None else _trapz_cumulative(self.series, self.times)
        return (_antiderivative(self.times, self.series, cum, self.anchor)
                - _antiderivative(self.times, self.series, cum, self.anchor - self.tau))

    def mean(self):
        if self.tau == 0:
            return self.at(0.0)
        return self.integral() / self.tau


class FunctionHistory(HistorySegment):
    """Segments ``s -> fn(s, x)`` of an analytic function (e.g. initial data)."""

    def __init__(self, fn, x, offsets):
        self.offsets = np.asarray(offsets, dtype=float)
        self.fn = fn
        self.x = np.asarray(x, dtype=float)

    @cached_property
    def values(self):
        s = self.offsets
        return np.asarray(self.fn(s, self.x[..., None]), dtype=float) * np.ones(self.x.shape + s.shape)

    def at(self, s):
        return np.asarray(self.fn(float(s), self.x), dtype=float) * np.ones(self.x.shape)


class FieldHistory(HistorySegment):
    """Batch of segments ``s -> u(t + s, x_k)`` read from a density field.

    Positions past ``x_max`` read the last column; the count of such reads
    is kept on the field.
    """

    def __init__(self, field: "DensityField", t, x):
        self.field = field
        self.offsets = field.grid.offsets
        self.t = float(t)
        self.x = np.asarray(x, dtype=float)

    @cached_property
    def values(self):
        cols = [np.asarray(self.at(s)) for s in self.offsets]
        return np.stack(cols, axis=-1)

    def at(self, s):
        return self.field.value(self.t + s, self.x)

    def integral(self):
        if self.tau == 0:
            return np.zeros(self.x.shape)
        f = self.field
        j, b = f._space_index(self.x)
        hi = f.column_antiderivative(self.t)
        lo = f.column_antiderivative(self.t - self.tau)
        col = hi - lo
        return (1 - b) * col[j] + b * col[j + 1]

    def mean(self):
        if self.tau == 0:
            return self.at(0.0)
        return self.integral() / self.tau


class DensityField:
    """Density samples ``values[i, j] = u(times[i], x[j])``."""

    def __init__(self, grid: SpaceTimeGrid, values=None):
        self.grid = grid
        self.values = np.zeros(grid.shape) if values is None else np.asarray(values, dtype=float)
        if self.values.shape != grid.shape:
            raise FieldError(f"values shape {self.values.shape} != grid shape {grid.shape}")
        self.clamped_mass = 0.0
        self.n_clamped_reads = 0

    @classmethod
    def from_function(cls, grid, fn):
        t = grid.times[:, None]
        x = grid.x[None, :]
        return cls(grid, np.asarray(fn(t, x), dtype=float) * np.ones(grid.shape))

    def copy(self):
        return DensityField(self.grid, self.values.copy())

    def clamp_negative(self):
        """Zero out negative samples, accumulating the removed magnitude."""
        neg = self.values < 0
        if np.any(neg):
            self.clamped_mass += float(-self.values[neg].sum())
            self.values[neg] = 0.0

    def _space_index(self, x):
        g = self.grid
        x = np.asarray(x, dtype=float)
        over = x > g.x_max
        if np.any(over):
            self.n_clamped_reads += int(np.count_nonzero(over))
        if np.any(x < -1e-12):
            raise FieldError("negative position in field lookup")
        px = np.clip(x, 0.0, g.x_max) / g.dx
        j = np.minimum(np.floor(px).astype(np.intp), g.n_x - 1)
        return j, px - j

    def row(self, t):
        i, th = self.grid.locate(float(t))
        i, th = int(i), float(th)
        if th == 0.0:
            return self.values[i]
        return (1 - th) * self.values[i] + th * self.values[i + 1]

    def value(self, t, x):
        """Bilinear value at scalar time ``t`` and positions ``x``."""
        r = self.row(t)
        j, b = self._space_index(x)
        out = (1 - b) * r[j] + b * r[j + 1]
        return out if np.ndim(out) else float(out)

    @cached_property
    def _cumulative(self):
        return _trapz_cumulative(self.values, self.grid.times)

    def column_antiderivative(self, T):
        """Per-column integral of u from -tau to T (exact for linear-in-time data)."""
        return _antiderivative(self.grid.times, self.values, self._cumulative, float(T))

    def history(self, t, x) -> FieldHistory:
        return FieldHistory(self, t, x)


class TotalSizeTrace:
    """Total-size samples ``values[i] = z(times[i])``."""

    def __init__(self, grid: SpaceTimeGrid, values=None):
        self.grid = grid
        self.values = np.zeros(len(grid.times)) if values is None else np.asarray(values, dtype=float)
        if self.values.shape != (len(grid.times),):
            raise FieldError("total-size trace does not match time grid")

    def copy(self):
        return TotalSizeTrace(self.grid, self.values.copy())

    def value(self, t):
        out = np.interp(t, self.grid.times, self.values)
        return out if np.ndim(out) else float(out)

    @cached_property
    def _cumulative(self):
        return _trapz_cumulative(self.values, self.grid.times)

    def history(self, t) -> SeriesHistory:
        return SeriesHistory(self.grid.times, self.values, t, self.grid.offsets, self._cumulative)


def total_size(u: DensityField, t):
    """Trapezoid integral of ``u(t, .)`` over ``[0, x_max]``."""
    g = u.grid
    if t < g.times[0] - 1e-12 or t > g.a + 1e-12:
        raise FieldError(f"t={t} outside [{g.times[0]}, {g.a}]")
    return float(quad_composite(u.row(t), grid=g.space))


def total_size_trace(u: DensityField) -> TotalSizeTrace:
    """Row-wise total size at every time node."""
    return TotalSizeTrace(u.grid, quad_composite(u.values, grid=u.grid.space, axis=1))


def extract_history(u: DensityField, t, x) -> FieldHistory:
    """The segment ``s -> u(t + s, x)`` (batched over ``x``)."""
    if t < 0:
        raise FieldError(f"history extraction needs t >= 0, got {t}")
    return u.history(t, x)


def extract_history_total(z: TotalSizeTrace, t) -> SeriesHistory:
    """The segment ``s -> z(t + s)``."""
    if t < 0:
        raise FieldError(f"history extraction needs t >= 0, got {t}")
    return z.history(t)


def _fmt(v):
    return repr(float(v))


def write_density_csv(path, u: DensityField):
    g = u.grid
    with open(path, "w", newline="") as fh:
        fh.write("t,x,u\n")
        xs = [_fmt(x) for x in g.x]
        for t, row in zip(g.times, u.values):
            ts = _fmt(t)
            fh.write("".join(f"{ts},{xv},{_fmt(v)}\n" for xv, v in zip(xs, row)))


def write_total_size_csv(path, z: TotalSizeTrace):
    with open(path, "w", newline="") as fh:
        fh.write("t,z\n")
        for t, v in zip(z.grid.times, z.values):
            fh.write(f"{_fmt(t)},{_fmt(v)}\n")


def write_boundary_csv(path, times, u0):
    with open(path, "w", newline="") as fh:
        fh.write("t,u0\n")
        for t, v in zip(times, u0):
            fh.write(f"{_fmt(t)},{_fmt(v)}\n")


def read_csv_columns(path):
    """Read one of the CSV artifacts back as a dict of float arrays (blank -> nan)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.genfromtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, k] for k, name in enumerate(header)}
