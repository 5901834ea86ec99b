"""Growth rate of total size under a delayed birth law.

The fitted log-slope of z(t) over the second half of the horizon should
match the real root of beta exp(-r tau) = r + mu.
"""

import numpy as np

from mvfrenewal import delayed_growth_rate, make_preset, picard_solve, preset_grid

for tau in (0.0, 0.25, 0.5, 1.0):
    model = make_preset("delayed", beta=2.0, mu=1.0, tau=tau, a=2.0)
    grid = preset_grid(model)
    res = picard_solve(model, grid)
    t = grid.times[grid.i0:]
    z = res.z.values[grid.i0:]
    keep = t >= 0.5 * model.a
    slope = np.polyfit(t[keep], np.log(z[keep]), 1)[0]
    r = delayed_growth_rate(2.0, 1.0, tau)
    print(f"tau={tau:4.2f}  root r={r:.6f}  fitted slope={slope:.6f}  diff={abs(slope - r):.1e}")
