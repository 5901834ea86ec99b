"""Evaluate the a-priori envelopes and check every preset's solution against them."""

from mvfrenewal import compute_bounds, make_preset, picard_solve, preset_grid, verify_admissible
from mvfrenewal.presets import PRESET_NAMES

for name in PRESET_NAMES:
    model = make_preset(name, nt=100, nx=100)
    res = picard_solve(model, preset_grid(model))
    b = compute_bounds(model.constants, model.a, model.tau)
    rep = verify_admissible(res.u, res.z, b)
    print(f"{name:16s} Z(a)={float(b.Z(model.a)):9.3g}  G_u={b.G_u:9.3g}  "
          f"L_u(a)={float(b.L_u(model.a)):9.3g}  {rep.summary()}")
