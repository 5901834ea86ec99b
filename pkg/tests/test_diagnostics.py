import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import solved
from mvfrenewal.diagnostics import (DiagnosticsError, compute_bounds, empirical_contraction,
                                    mass_balance_residual, verify_admissible, write_violations_csv)
from mvfrenewal.field import DensityField, SpaceTimeGrid, TotalSizeTrace, total_size_trace
from mvfrenewal.model import AssumptionConstants
from mvfrenewal.presets import make_preset, preset_grid


def consts(**kw):
    base = dict(c_hat=1.0, eps0=0.9, kappa=1.0, L_phi=1.0, M_lambda=1.0, M_W=1.0, phi_sup=1.0, phi_inf1=1.0)
    base.update(kw)
    return AssumptionConstants(**base)


def test_Z_degenerates_to_initial_mass():
    b = compute_bounds(consts(kappa=0.0, M_W=0.0), 1.0)
    assert np.allclose(b.Z(np.linspace(0, 1, 5)), 1.0)


def test_U_degenerates_to_initial_sup():
    b = compute_bounds(consts(kappa=0.0, M_lambda=0.0, phi_sup=3.0), 1.0)
    assert np.allclose(b.U(np.linspace(0, 1, 5)), 3.0)


def test_Z_constant_realization():
    assert compute_bounds(consts(), 1.0).Z(1.0) == pytest.approx(math.e ** 2, rel=1e-14)


def test_L_u_solves_its_integral_equation():
    b = compute_bounds(consts(L_lambda=0.7, L_c=0.3, L_K=0.2, M_W=0.4), 1.0)
    assert b.remark_residual <= 1e-8
    assert b.L_u(0.0) == pytest.approx(b.L_u0)


def test_bounds_with_time_dependent_constants():
    b = compute_bounds(consts(c_hat=lambda t: 1 + t, L_lambda=lambda t: 0.1 * t), 1.0)
    assert b.remark_residual <= 1e-8
    # Z = exp(int_0^1 (1 + s) + 1 ds) with kappa = 1, M_W = 1
    assert b.Z(1.0) == pytest.approx(math.exp(2.5), rel=1e-10)


def test_overflow_guard():
    with pytest.raises(DiagnosticsError, match="overflow"):
        compute_bounds(consts(M_W=1e4), 1.0)


@given(st.sampled_from(["kappa", "M_W", "M_lambda", "phi_inf1"]), st.floats(0.01, 1.0))
def test_bounds_monotone(name, bump):
    base = consts(phi_sup=0.5)
    b0 = compute_bounds(base, 1.0)
    b1 = compute_bounds(base.replace(**{name: getattr(base, name) + bump}), 1.0)
    t = np.linspace(0, 1, 11)
    Z0, Z1, U0, U1 = b0.Z(t), b1.Z(t), b0.U(t), b1.U(t)
    assert np.all(np.diff(Z0) >= 0) and np.all(np.diff(U0) >= 0) and np.all(np.diff(b0.L_u(t)) >= 0)
    assert np.all(Z1 >= Z0) and np.all(U1 >= U0)
    if name != "M_lambda":
        assert Z1[-1] > Z0[-1]
    if name != "phi_inf1" or base.kappa * Z0[-1] >= base.phi_sup:
        assert U1[-1] > U0[-1]


def test_zero_pair_is_admissible():
    g = SpaceTimeGrid.from_resolution(1.0, 0.0, 2.0, 10, 10)
    rep = verify_admissible(DensityField(g), TotalSizeTrace(g), compute_bounds(consts(), 1.0))
    assert rep.ok and rep.n_checks > 0


def test_forced_density_breach_flags_every_node():
    g = SpaceTimeGrid.from_resolution(1.0, 0.0, 2.0, 10, 10)
    b = compute_bounds(consts(kappa=0.0, M_lambda=0.0), 1.0)
    u = DensityField(g, 2.0 * np.ones(g.shape))
    rep = verify_admissible(u, TotalSizeTrace(g), b)
    assert rep.by_check()["density_bound"] == np.prod(g.shape)


def test_violation_csv(tmp_path):
    g = SpaceTimeGrid.from_resolution(1.0, 0.0, 2.0, 4, 2)
    b = compute_bounds(consts(kappa=0.0, M_lambda=0.0), 1.0)
    rep = verify_admissible(DensityField(g, 5 * np.ones(g.shape)), TotalSizeTrace(g), b)
    write_violations_csv(tmp_path / "v.csv", rep.violations)
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "check,t,x,value,bound" and len(lines) == len(rep.violations) + 1


def test_classical_solution_is_admissible(classical):
    m, g, res = classical
    rep = verify_admissible(res.u, res.z, compute_bounds(m.constants, m.a, m.tau), slack=0.05)
    assert rep.ok, rep.summary()


def test_pure_transport_conserves_mass():
    m, g, res = solved("size_structured", g0=1.0, g_inf=1.0, mu=0.0)
    assert mass_balance_residual(m, res.u, res.z) <= 1e-3 * res.z.values[0]


def test_variable_speed_conserves_mass():
    m, g, res = solved("size_structured", g0=1.0, g_inf=2.0, mu=0.0)
    assert mass_balance_residual(m, res.u, res.z) <= 1e-2 * res.z.values[0]


def test_mass_balance_zero_density():
    m = make_preset("size_structured", mu=0.0)
    g = preset_grid(m)
    u = DensityField(g)
    assert mass_balance_residual(m, u, total_size_trace(u)) == 0.0


def test_mass_balance_requires_conservative_model():
    m = make_preset("size_structured", mu=0.5)
    g = preset_grid(m)
    with pytest.raises(ValueError, match="W == 0"):
        mass_balance_residual(m, DensityField(g))
    with pytest.raises(ValueError):
        mass_balance_residual(make_preset("classical"), DensityField(preset_grid(make_preset("classical"))))


def test_contraction_of_constant_map_is_zero():
    m = make_preset("size_structured", g0=1.0, g_inf=1.0, mu=0.0, nt=50, nx=50)
    rep = empirical_contraction(m, n_pairs=3, grid=preset_grid(m))
    assert np.all(rep.ratios == 0.0)


def test_contraction_deterministic_and_below_one():
    m = make_preset("classical", crowding=0.5, nt=50, nx=50)
    g = preset_grid(m)
    r1 = empirical_contraction(m, C=8.0, n_pairs=4, seed=3, grid=g)
    r2 = empirical_contraction(m, C=8.0, n_pairs=4, seed=3, grid=g)
    assert np.array_equal(r1.ratios, r2.ratios)
    assert 0 < r1.theta_hat < 1


def test_weak_weight_is_reported_not_hidden():
    m = make_preset("classical", crowding=0.5, nt=50, nx=50)
    g = preset_grid(m)
    weak = empirical_contraction(m, C=0.01, n_pairs=4, seed=3, grid=g)
    strong = empirical_contraction(m, C=8.0, n_pairs=4, seed=3, grid=g)
    assert math.isfinite(weak.theta_hat) and weak.C == 0.01
    assert weak.theta_hat > strong.theta_hat


def test_contraction_needs_two_pairs():
    with pytest.raises(ValueError):
        empirical_contraction(make_preset("classical"), n_pairs=1)
