"""Characteristic curves ``d eta/ds = c(s, eta, z_s)`` for a frozen total-size
trace ``z``.

Two access patterns are supported. The pointwise functions (:func:`trace`,
:func:`entry`, :func:`critical_curve`) follow one curve with scalar RK4
and are used for checks and single-point evaluation. :func:`march` moves a
whole family of curves forward in lockstep; the solver builds the operator
on top of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .field import TotalSizeTrace
from .model import ModelError, ModelSpec
from .numerics import bisect_root, rk4_step

INITIAL = "initial"
BOUNDARY = "boundary"


class CharacteristicError(ModelError):
    pass


class CharacteristicExit(CharacteristicError):
    """A backward trace reached ``x = 0`` before the requested time."""

    def __init__(self, alpha):
        super().__init__(f"characteristic leaves the domain through x = 0 at s = {alpha!r}")
        self.alpha = alpha


@dataclass(frozen=True)
class CharEntry:
    """Where the characteristic through (t, x) enters the domain."""

    alpha: float
    origin: Literal["initial", "boundary"]
    eta_alpha: float

    def __post_init__(self):
        if self.origin == BOUNDARY and self.eta_alpha != 0.0:
            raise ValueError("boundary entry must sit at x = 0")
        if self.origin == INITIAL and self.alpha != 0.0:
            raise ValueError("initial entry must sit at t = 0")


@dataclass(frozen=True)
class CharPath:
    """Samples ``eta(s)`` for increasing ``s`` ending at the anchor ``(t, x)``."""

    s: np.ndarray
    eta: np.ndarray
    entry: CharEntry | None = None


def speed(model: ModelSpec, z: TotalSizeTrace, s, eta):
    return model.c(s, eta, z.history(s))


def default_substep(z: TotalSizeTrace) -> float:
    return z.grid.dt / 4.0


def _rhs(model, z):
    def f(s, y):
        v = np.asarray(speed(model, z, s, y), dtype=float)
        if not np.all(np.isfinite(v)):
            raise CharacteristicError(f"speed not finite at s={s!r}, x={y!r}")
        return v if v.ndim else float(v)
    return f


def trace(model: ModelSpec, z: TotalSizeTrace, t, x, s_target, dt_sub=None):
    """``eta(s_target; t, x)`` by RK4 integrated backward from ``eta(t) = x``.

    Raises :class:`CharacteristicExit` when the curve reaches ``x < 0``
    first.
    """
    if s_target > t:
        raise ValueError("s_target must not exceed t")
    if s_target == t:
        return float(x)
    dt_sub = dt_sub or default_substep(z)
    steps = max(1, math.ceil((t - s_target) / dt_sub - 1e-12))
    h = (s_target - t) / steps
    f = _rhs(model, z)
    eta = float(x)
    for k in range(steps):
        s = t + k * h
        nxt = rk4_step(f, s, eta, h)
        if nxt < 0:
            raise CharacteristicExit(_crossing(f, s, eta, h))
        eta = nxt
    return eta


def _crossing(f, s, eta, h, tol=1e-12):
    """Time inside one RK4 step (from s, of size h < 0) where eta hits 0."""
    if eta <= 0:
        return s
    g = lambda hh: rk4_step(f, s, eta, -hh)  # noqa: E731
    hh = bisect_root(g, 0.0, -h, tol=tol)
    return s - hh


def trace_path(model: ModelSpec, z: TotalSizeTrace, t, x, dt_sub=None, tol_alpha=None):
    """Backward trace from (t, x) down to the entry point, keeping samples."""
    dt_sub = dt_sub or default_substep(z)
    tol_alpha = tol_alpha if tol_alpha is not None else 1e-10 * z.grid.a
    f = _rhs(model, z)
    wedge = _wedge(model)
    if x == 0.0:
        if t > 0:
            _check_positive(model, z, t, 0.0, wedge)
            ent = CharEntry(float(t), BOUNDARY, 0.0)
        else:
            ent = CharEntry(0.0, INITIAL, 0.0)
        return CharPath(np.array([float(t)]), np.array([0.0]), ent)
    steps = max(1, math.ceil(t / dt_sub - 1e-12)) if t > 0 else 0
    ss, ee = [float(t)], [float(x)]
    eta = float(x)
    for k in range(steps):
        h = -t / steps
        s = t + k * h
        if wedge is not None and eta <= wedge(s):
            _check_positive(model, z, s, eta, wedge)
        nxt = rk4_step(f, s, eta, h)
        if nxt <= 0:
            alpha = _crossing(f, s, eta, h)
            if alpha <= tol_alpha:
                ss.append(0.0)
                ee.append(0.0)
                ent = CharEntry(0.0, INITIAL, 0.0)
            else:
                ss.append(alpha)
                ee.append(0.0)
                ent = CharEntry(float(alpha), BOUNDARY, 0.0)
            return CharPath(np.array(ss[::-1]), np.array(ee[::-1]), ent)
        eta = nxt
        ss.append(t + (k + 1) * h if k + 1 < steps else 0.0)
        ee.append(eta)
    return CharPath(np.array(ss[::-1]), np.array(ee[::-1]), CharEntry(0.0, INITIAL, float(eta)))


def _wedge(model):
    if model.constants is None:
        return None
    return lambda s: model.constants.integral("c_hat", s)


def _check_positive(model, z, s, eta, wedge):
    v = float(speed(model, z, s, eta))
    if v <= 0:
        raise CharacteristicError(
            f"speed {v!r} <= 0 at (s={s!r}, x={eta!r}) inside the boundary wedge; "
            "the speed must be strictly positive near x = 0")


def entry(model: ModelSpec, z: TotalSizeTrace, t, x, dt_sub=None, tol_alpha=None) -> CharEntry:
    """Classify (t, x): reached from the initial strip or from the boundary."""
    if not (0 <= t <= z.grid.a + 1e-12) or x < 0:
        raise ValueError(f"(t, x) = ({t}, {x}) outside the domain")
    return trace_path(model, z, t, x, dt_sub, tol_alpha).entry


def critical_curve(model: ModelSpec, z: TotalSizeTrace, times=None, dt_sub=None):
    """``eta_0``: the characteristic leaving (0, 0), sampled at ``times``."""
    times = z.grid.forward.nodes if times is None else np.asarray(times, dtype=float)
    dt_sub = dt_sub or default_substep(z)
    f = _rhs(model, z)
    out = np.empty(len(times))
    s, eta = 0.0, 0.0
    for k, tk in enumerate(times):
        if tk < s:
            raise ValueError("times must be nondecreasing and start at >= 0")
        if tk > s:
            steps = max(1, math.ceil((tk - s) / dt_sub - 1e-12))
            h = (tk - s) / steps
            for j in range(steps):
                eta = rk4_step(f, s + j * h, eta, h)
            s = float(tk)
        out[k] = eta
    return out


def march(model: ModelSpec, z: TotalSizeTrace, eta, s0, s1, n_sub):
    """Advance positions ``eta`` from ``s0`` to ``s1`` in ``n_sub`` RK4 steps.

    Yields ``(s, eta)`` at every sub-step node, the start included, so the
    caller can accumulate path integrals on the same ladder.
    """
    f = _rhs(model, z)
    h = (s1 - s0) / n_sub
    eta = np.asarray(eta, dtype=float)
    yield s0, eta
    for j in range(n_sub):
        eta = rk4_step(f, s0 + j * h, eta, h)
        yield (s0 + (j + 1) * h if j + 1 < n_sub else s1), eta
