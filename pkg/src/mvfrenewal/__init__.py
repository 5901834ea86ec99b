"""Structured population densities with delayed renewal, solved by Picard
iteration of an operator built along characteristics.

Typical use::

    from mvfrenewal import make_preset, preset_grid, picard_solve

    model = make_preset("delayed", tau=0.5, a=2.0)
    result = picard_solve(model, preset_grid(model))
    result.u.values, result.z.values, result.report.residuals
"""

from .characteristics import critical_curve, entry, trace, trace_path
from .diagnostics import (AdmissibleBounds, compute_bounds, empirical_contraction, mass_balance_residual,
                          verify_admissible)
from .field import (DensityField, HistorySegment, SpaceTimeGrid, TotalSizeTrace, extract_history,
                    extract_history_total, total_size, total_size_trace)
from .model import (AssumptionConstants, ModelError, ModelSpec, RenewalFunctional, SamplingPlan,
                    estimate_constants, eval_W, validate_consistency)
from .presets import (PresetParams, analytic_classical, analytic_delayed, delayed_growth_rate, make_preset,
                      oracle_for, preset_grid)
from .solver import (BieleckiWeight, IterationReport, apply_operator, bielecki_distance, initial_guess,
                     make_grid, operator_at_point, picard_solve, solve_renewal_boundary)

__version__ = "0.1.0"

__all__ = [
    'critical_curve',
    'entry',
    'trace',
    'trace_path',
    'AdmissibleBounds',
    'compute_bounds',
    'empirical_contraction',
    'mass_balance_residual',
    'verify_admissible',
    'DensityField',
    'HistorySegment',
    'SpaceTimeGrid',
    'TotalSizeTrace',
    'extract_history',
    'extract_history_total',
    'total_size',
    'total_size_trace',
    'AssumptionConstants',
    'ModelError',
    'ModelSpec',
    'RenewalFunctional',
    'SamplingPlan',
    'estimate_constants',
    'eval_W',
    'validate_consistency',
    'PresetParams',
    'analytic_classical',
    'analytic_delayed',
    'delayed_growth_rate',
    'make_preset',
    'oracle_for',
    'preset_grid',
    'BieleckiWeight',
    'IterationReport',
    'apply_operator',
    'bielecki_distance',
    'initial_guess',
    'make_grid',
    'operator_at_point',
    'picard_solve',
    'solve_renewal_boundary',
]
