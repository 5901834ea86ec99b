import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvfrenewal.characteristics import (BOUNDARY, INITIAL, CharEntry, CharacteristicError, CharacteristicExit,
                                        critical_curve, entry, march, trace, trace_path)
from mvfrenewal.field import SpaceTimeGrid, TotalSizeTrace
from mvfrenewal.presets import make_preset


def trace_for(model, values=None, n=100):
    g = SpaceTimeGrid.from_resolution(model.a, model.tau, model.x_max, n, 10)
    vals = np.ones(len(g.times)) if values is None else values(g.times)
    return TotalSizeTrace(g, vals)


def eta0_variable(t):
    # forward characteristic of d eta/ds = 2 - exp(-eta) from (0, 0)
    return np.log((np.exp(2 * np.asarray(t)) + 1) / 2)


VARIABLE = make_preset("size_structured", g0=1.0, g_inf=2.0, mu=0.0)   # c = 2 - exp(-x)
UNIT = make_preset("size_structured", g0=1.0, g_inf=1.0, mu=0.0)       # c = 1


def test_anchor_property():
    z = trace_for(VARIABLE)
    assert trace(VARIABLE, z, 0.7, 1.3, 0.7) == 1.3


def test_unit_speed_entries():
    z = trace_for(UNIT)
    e = entry(UNIT, z, 0.8, 0.3)
    assert e.origin == BOUNDARY and e.alpha == pytest.approx(0.5, abs=1e-10)
    e = entry(UNIT, z, 0.5, 2.0)
    assert e.origin == INITIAL and e.eta_alpha == pytest.approx(1.5, abs=1e-12)
    assert entry(UNIT, z, 0.4, 0.0) == CharEntry(0.4, BOUNDARY, 0.0)


def test_point_on_critical_curve_is_initial():
    z = trace_for(UNIT)
    e = entry(UNIT, z, 0.5, 0.5)
    assert e.origin == INITIAL and e.eta_alpha == pytest.approx(0.0, abs=1e-9)


def test_critical_curve_variable_speed_closed_form():
    z = trace_for(VARIABLE)
    t = np.linspace(0, 1, 11)
    assert np.allclose(critical_curve(VARIABLE, z, t), eta0_variable(t), atol=1e-9)


@given(st.floats(0.05, 1.0), st.floats(0.0, 1.0))
def test_variable_speed_entry_time_closed_form(t, frac):
    z = trace_for(VARIABLE)
    x = frac * float(eta0_variable(t)) * 0.999
    e = entry(VARIABLE, z, t, x)
    alpha = t - 0.5 * math.log(2 * math.exp(x) - 1)
    assert e.origin == BOUNDARY
    assert e.alpha == pytest.approx(alpha, abs=1e-8)


def test_backward_trace_past_boundary_raises_exit():
    z = trace_for(UNIT)
    with pytest.raises(CharacteristicExit) as info:
        trace(UNIT, z, 1.0, 0.25, 0.0)
    assert info.value.alpha == pytest.approx(0.75, abs=1e-10)


def test_trace_rejects_forward_target():
    with pytest.raises(ValueError):
        trace(UNIT, trace_for(UNIT), 0.5, 1.0, 0.6)


def test_entry_rejects_outside_domain():
    with pytest.raises(ValueError):
        entry(UNIT, trace_for(UNIT), 1.5, 1.0)


def test_path_samples_increase_and_end_at_anchor():
    z = trace_for(VARIABLE)
    p = trace_path(VARIABLE, z, 0.9, 0.8)
    assert p.s[-1] == 0.9 and p.eta[-1] == 0.8
    assert np.all(np.diff(p.s) > 0) and np.all(np.diff(p.eta) > 0)
    assert p.entry.origin == BOUNDARY and p.eta[0] == 0.0


def crowded_trace(seed):
    rng = np.random.default_rng(seed)
    amp, w, ph = rng.uniform(0.2, 3.0), rng.uniform(1, 8), rng.uniform(0, 6)
    return lambda t: 1.0 + amp * (1 + np.sin(w * t + ph))


@given(st.integers(0, 10_000), st.integers(20, 100), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_semigroup_on_grid_aligned_splits(seed, k_t, r_frac, s_frac):
    model = make_preset("size_structured", crowding=0.7, g0=0.5, g_inf=2.0)
    z = trace_for(model, crowded_trace(seed))
    dt = z.grid.dt
    t = k_t * dt
    r = int(r_frac * k_t) * dt
    s = int(s_frac * r_frac * k_t) * dt
    direct = trace(model, z, t, 3.0, s)
    via = trace(model, z, r, trace(model, z, t, 3.0, r), s)
    assert via == pytest.approx(direct, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(0.2, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_semigroup_at_arbitrary_splits(seed, t, r_frac, s_frac):
    model = make_preset("size_structured", crowding=0.7, g0=0.5, g_inf=2.0)
    z = trace_for(model, crowded_trace(seed))
    r = r_frac * t
    s = s_frac * r
    direct = trace(model, z, t, 3.0, s)
    via = trace(model, z, r, trace(model, z, t, 3.0, r), s)
    # RK4 steps straddling kinks of the piecewise-linear z are locally second order
    assert via == pytest.approx(direct, abs=2e-6)


@given(st.integers(0, 10_000), st.floats(0.0, 2.0), st.floats(1e-3, 2.0))
def test_non_crossing(seed, x1, dx):
    model = make_preset("size_structured", crowding=0.7, g0=0.5, g_inf=2.0)
    z = trace_for(model, crowded_trace(seed))
    t = 1.0
    lo = trace_path(model, z, t, x1)
    hi = trace_path(model, z, t, x1 + dx)
    # compare at common sample times inside both paths
    s = np.linspace(max(lo.s[0], hi.s[0]), t, 25)
    assert np.all(np.interp(s, lo.s, lo.eta) <= np.interp(s, hi.s, hi.eta) + 1e-12)


def test_march_matches_pointwise_trace():
    model = make_preset("size_structured", crowding=0.7, g0=0.5, g_inf=2.0)
    z = trace_for(model, crowded_trace(3))
    eta = np.array([0.0, 1.0, 4.0])
    steps = list(march(model, z, eta, 0.0, 0.5, 8))
    assert len(steps) == 9 and steps[-1][0] == 0.5
    end = steps[-1][1]
    back = [trace(model, z, 0.5, e, 0.0, dt_sub=0.5 / 8) for e in end[1:]]
    assert np.allclose(back, eta[1:], atol=1e-10)


def test_nonpositive_speed_in_wedge_is_an_error():
    model = make_preset("size_structured")
    from dataclasses import replace
    bad = replace(model, c=lambda t, x, q: 0.0 * np.asarray(x) - 0.1 * (np.asarray(x) < 0.5) + 1.0 * (np.asarray(x) >= 0.5))
    with pytest.raises(CharacteristicError):
        trace_path(bad, trace_for(bad), 0.5, 0.0)
