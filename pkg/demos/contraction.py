"""Picard residual history next to a measured contraction factor.

Random admissible pairs are pushed through the operator once; the largest
ratio of weighted distances estimates the contraction factor that the
residual ratios of the iteration should respect.
"""

from mvfrenewal import empirical_contraction, make_preset, picard_solve, preset_grid

model = make_preset("moving_average", nt=100, nx=100)
grid = preset_grid(model)
res = picard_solve(model, grid)
print(f"status: {res.report.status} after {res.report.iterations} iterations (C = {res.report.C:.3g})")
for k, r, q in res.report.convergence_rows():
    print(f"  iter {k:2d}  residual {r:.3e}  ratio {'' if q is None else f'{q:.3f}'}")
rep = empirical_contraction(model, C=res.report.C, n_pairs=8, grid=grid)
print(f"measured contraction over {len(rep.ratios)} pairs: {rep.theta_hat:.3g}")
