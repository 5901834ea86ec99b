"""Solve the classical preset on three grids and compare with exp((b-m)t - bx)."""

import numpy as np

from mvfrenewal import make_preset, oracle_for, picard_solve, preset_grid

model = make_preset("classical", beta=2.0, mu=1.0, a=1.0)
exact = oracle_for(model)
prev = None
print(f"{'N_t':>5} {'N_x':>5} {'sup rel err':>12} {'rate':>6}")
for scale in (0.25, 0.5, 1.0):
    grid = preset_grid(model, scale)
    res = picard_solve(model, grid)
    t = grid.times[grid.i0:, None]
    ref = exact(t, grid.x[None, :])
    err = np.max(np.abs(res.u.values[grid.i0:] - ref)) / np.max(np.abs(ref))
    rate = "" if prev is None else f"{np.log2(prev / err):6.2f}"
    print(f"{grid.n_t:5d} {grid.n_x:5d} {err:12.3e} {rate:>6}")
    prev = err
