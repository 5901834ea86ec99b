"""Command-line front end driven by JSON config files.

::

    mvf run <config>       solve, write CSV artifacts and report.txt
    mvf check <config>     consistency + sampled assumption checks
    mvf compare <config>   error table against the closed-form solution
    mvf study <config>     grid-refinement self-convergence table

A config names either a preset::

    {"preset": "delayed", "params": {"beta": 2, "mu": 1, "tau": 0.5, "a": 2},
     "solver": {"tol": 1e-8, "max_iter": 50}, "output": "out"}

or an inline model whose coefficients are arithmetic expressions (see
:mod:`mvfrenewal.expr`)::

    {"model": {"c": "1", "lam": "-1 - 0.5*q(0)/(1 + q(0))",
               "phi": "exp(t - 2*x)", "tau": 0, "a": 1, "x_max": 20,
               "kernel": {"atoms": [[0, "2"]]}}}

Exit codes: 0 success, 1 configuration/model error or failed check,
2 solver did not converge (artifacts are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import diagnostics, presets, solver
from .expr import Expression, ExpressionError
from .field import (SpaceTimeGrid, write_boundary_csv, write_density_csv, write_total_size_csv)
from .model import (AssumptionConstants, ModelError, ModelSpec, RenewalFunctional, SamplingPlan,
                    estimate_constants, validate_consistency)

log = logging.getLogger("mvfrenewal")

EXIT_OK, EXIT_FAIL, EXIT_NOT_CONVERGED = 0, 1, 2


class ConfigError(ValueError):
    pass


def _fmt(v):
    return "" if v is None else repr(float(v))


def load_config(path):
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if ("preset" in cfg) == ("model" in cfg):
        raise ConfigError("config needs exactly one of 'preset' or 'model'")
    cfg["_base"] = path.parent
    return cfg


def _broadcast(val, *shapes):
    return np.asarray(val, dtype=float) + np.zeros(np.broadcast_shapes(*map(np.shape, shapes)))


def _inline_model(spec: dict) -> ModelSpec:
    allowed = {"c", "dc_dx", "lam", "phi", "tau", "a", "x_max", "kernel", "symbols", "conservative",
               "constants", "tail_tol", "name"}
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown model key(s): {', '.join(sorted(unknown))}")
    for key in ("c", "lam", "phi", "a", "x_max"):
        if key not in spec:
            raise ConfigError(f"model needs '{key}'")
    tau = float(spec.get("tau", 0.0))
    syms = {**{k: float(v) for k, v in spec.get("symbols", {}).items()}, "tau": tau}
    try:
        c_e = Expression(spec["c"], ("t", "x"), ("q",), syms)
        lam_e = Expression(spec["lam"], ("t", "x"), ("q", "w"), syms)
        phi_e = Expression(spec["phi"], ("t", "x"), (), syms)
        dc_e = Expression(spec["dc_dx"], ("t", "x"), ("q",), syms) if spec.get("dc_dx") is not None else None
        kernel = _inline_kernel(spec.get("kernel"), syms)
    except ExpressionError as exc:
        raise ConfigError(str(exc)) from None

    def c(t, x, q):
        return _broadcast(c_e(t=t, x=x, q=q), x)

    def lam(t, x, w, q):
        return _broadcast(lam_e(t=t, x=x, w=w, q=q), x)

    def phi(t, x):
        return _broadcast(phi_e(t=t, x=x), t, x)

    def dc_dx(t, x, q):
        return _broadcast(dc_e(t=t, x=x, q=q), x)

    consts = None
    if spec.get("constants"):
        consts = _constants(spec["constants"])
    return ModelSpec(c=c, lam=lam, phi=phi, tau=tau, a=float(spec["a"]), x_max=float(spec["x_max"]),
                     kernel=kernel, dc_dx=dc_dx if dc_e is not None else None, constants=consts,
                     conservative=bool(spec.get("conservative", False)), name=spec.get("name", "custom"),
                     tail_tol=float(spec.get("tail_tol", 1e-10)))


def _inline_kernel(spec, syms):
    if not spec:
        return None
    atoms = []
    for item in spec.get("atoms", []):
        if isinstance(item, dict):
            s, wsrc = item["s"], item["weight"]
        else:
            s, wsrc = item
        off = Expression(s, (), (), syms)
        atoms.append((float(off()), Expression(wsrc, ("t", "x"), (), syms)))
    dens = spec.get("density")
    dens_e = Expression(dens, ("t", "x", "s"), (), syms) if dens is not None else None
    if not atoms and dens_e is None:
        return None
    if dens_e is not None and dens_e.is_constant:
        dens_const = float(dens_e())
    else:
        dens_const = None

    def kernel(t, x):
        at = tuple((s, _broadcast(w(t=t, x=x), x)) for s, w in atoms)
        if dens_e is None:
            return RenewalFunctional(atoms=at)
        if dens_const is not None:
            return RenewalFunctional(atoms=at, density=dens_const)
        return RenewalFunctional(atoms=at, density=lambda s: _broadcast(dens_e(t=t, x=x, s=s), x))

    return kernel


def _constants(d, base: AssumptionConstants | None = None):
    names = {f.name for f in fields(AssumptionConstants)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown constant(s): {', '.join(sorted(unknown))}")
    try:
        if base is not None:
            return base.replace(**{k: float(v) for k, v in d.items()})
        return AssumptionConstants(**{k: float(v) for k, v in d.items()})
    except TypeError as exc:
        raise ConfigError(f"incomplete constants: {exc}") from None


def build_model(cfg) -> ModelSpec:
    if "preset" in cfg:
        params = dict(cfg.get("params", {}))
        if "grid" in cfg:
            for k in ("nt", "nx"):
                if k in cfg["grid"]:
                    params[k] = cfg["grid"][k]
        model = presets.make_preset(cfg["preset"], params)
        if cfg.get("constants"):
            model = replace(model, constants=_constants(cfg["constants"], model.constants))
        return model
    return _inline_model(cfg["model"])


def build_grid(cfg, model: ModelSpec, scale=1.0) -> SpaceTimeGrid:
    if model.name in presets.PRESET_NAMES and "preset" in cfg:
        return presets.preset_grid(model, scale)
    g = cfg.get("grid", {})
    nt = int(round(g.get("nt", 200) * scale))
    nx = int(round(g.get("nx", 200) * scale))
    return SpaceTimeGrid.from_resolution(model.a, model.tau, model.x_max, nt, nx, g.get("m_h"))


def _output_dir(cfg, override=None):
    out = override or cfg.get("output") or "output"
    out = Path(out)
    return out if out.is_absolute() else Path(cfg["_base"]) / out


def _solver_opts(cfg):
    s = cfg.get("solver", {})
    return dict(C=s.get("C"), tol=float(s.get("tol", 1e-8)), max_iter=int(s.get("max_iter", 50)))


def _constants_for(model, cfg):
    if model.constants is not None:
        return model.constants
    rep = estimate_constants(model, SamplingPlan(seed=int(cfg.get("seed", 0))))
    log.info("no declared constants; using sampled estimates")
    return rep.constants


def _gate_consistency(model, cfg, out=None):
    out = out or sys.stderr
    rep = validate_consistency(model, tol=float(cfg.get("consistency_tol", 1e-6)))
    if not rep.passed:
        print(f"error: consistency condition violated: phi(0,0) must equal the renewal integral at t=0; {rep}",
              file=out)
    return rep


def run_simulation(config, out_override=None) -> int:
    try:
        cfg = load_config(config)
        model = build_model(cfg)
        grid = build_grid(cfg, model)
        if not _gate_consistency(model, cfg).passed:
            return EXIT_FAIL
        constants = _constants_for(model, cfg)
        res = solver.picard_solve(model, grid, constants=constants, **_solver_opts(cfg))
        bounds = diagnostics.compute_bounds(constants, model.a, model.tau)
        adm = diagnostics.verify_admissible(res.u, res.z, bounds)
        contraction = None
        pairs = int(cfg.get("contraction_pairs", 0))
        if pairs >= 2:
            contraction = diagnostics.empirical_contraction(
                model, res.report.C, pairs, int(cfg.get("seed", 0)), grid, constants=constants)
    except (ConfigError, ModelError, ExpressionError, solver.SolverError, diagnostics.DiagnosticsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL

    out = _output_dir(cfg, out_override)
    out.mkdir(parents=True, exist_ok=True)
    write_density_csv(out / "density.csv", res.u)
    write_total_size_csv(out / "totalsize.csv", res.z)
    write_boundary_csv(out / "boundary.csv", grid.forward.nodes, res.boundary[grid.i0:])
    with open(out / "convergence.csv", "w", newline="") as fh:
        fh.write("iter,residual,ratio\n")
        for k, r, q in res.report.convergence_rows():
            fh.write(f"{k},{_fmt(r)},{_fmt(q)}\n")
    (out / "report.txt").write_text(_run_report(model, grid, res, adm, contraction, constants))
    rep = res.report
    print(f"{rep.status}: {rep.iterations} iteration(s), last residual {rep.residuals[-1]:.3e}; artifacts in {out}")
    if not rep.converged:
        print(f"warning: {rep.message}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _run_report(model, grid, res, adm, contraction, constants):
    rep = res.report
    meas = rep.measured_ratios
    z = res.z.values[grid.i0:]
    lines = [
        f"model: {model.name}",
        f"grid: n_t={grid.n_t} n_x={grid.n_x} m_h={grid.m_h} dt={grid.dt:.6g} dx={grid.dx:.6g}",
        f"status: {rep.status}",
        f"iterations: {rep.iterations}",
        f"weight constant C: {rep.C:.6g}",
        f"final residual: {rep.residuals[-1]:.6e}",
        "measured contraction (max ratio of successive residuals): "
        + (f"{max(meas):.6g}" if meas else "n/a (fewer than two iterations)"),
    ]
    if contraction is not None:
        lines.append(f"empirical contraction over {len(contraction.ratios)} pairs: {contraction.theta_hat:.6g}")
    if rep.message:
        lines.append(f"note: {rep.message}")
    lines += [
        adm.summary(),
        f"mass: z(0)={z[0]:.12g} z(a)={z[-1]:.12g}",
        f"mass: max |z from influx formula - z by quadrature| = "
        f"{np.max(np.abs(res.image.z_transport - z)):.3e}",
        f"mass: clamped negative density = {res.u.clamped_mass:.3e}",
    ]
    if model.conservative and model.kernel is None:
        lines.append(f"mass balance residual max|z(t)-z(0)| = {diagnostics.mass_balance_residual(model, res.u, res.z):.3e}")
    lines.append(f"wall time: {rep.wall_time:.3f} s")
    return "\n".join(lines) + "\n"


def check_model(config) -> int:
    try:
        cfg = load_config(config)
        model = build_model(cfg)
        cons = _gate_consistency(model, cfg, out=sys.stdout)
        print(cons)
        plan = SamplingPlan(n_probes=int(cfg.get("probes", 400)), seed=int(cfg.get("seed", 0)))
        rep = estimate_constants(model, plan)
    except (ConfigError, ModelError, ExpressionError) as exc:
        print(f"error: {exc}")
        return EXIT_FAIL
    print(rep.summary())
    if model.constants is None:
        print("note: no declared constants; only structural checks were applied")
    return EXIT_OK if (cons.passed and rep.ok) else EXIT_FAIL


def _sup_rel(u, exact):
    g = u.grid
    ref = exact(g.times[:, None], g.x[None, :])
    return float(np.max(np.abs(u.values - ref)) / np.max(np.abs(ref)))


def fitted_log_slope(z_trace, t0, t1):
    """Least-squares slope of ``log z`` over grid times in ``[t0, t1]``."""
    t = z_trace.grid.times
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    if np.count_nonzero(sel) < 2 or np.any(z_trace.values[sel] <= 0):
        raise ValueError("need at least two positive samples to fit a log-slope")
    return float(np.polyfit(t[sel], np.log(z_trace.values[sel]), 1)[0])


def compare_oracle(config, out_override=None) -> int:
    try:
        cfg = load_config(config)
        model = build_model(cfg)
    except (ConfigError, ModelError, ExpressionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    exact = presets.oracle_for(model) if "preset" in cfg else None
    if exact is None:
        print(f"error: no oracle for model {model.name!r} (closed forms exist for "
              f"{', '.join(presets.ORACLE_PRESETS)} without crowding)", file=sys.stderr)
        return EXIT_FAIL
    cmp = cfg.get("compare", {})
    levels = [int(n) for n in cmp.get("levels", [50, 100, 200])]
    threshold = float(cmp.get("threshold", 1e-2))
    opts = _solver_opts(cfg)
    rows, prev = [], None
    try:
        for n in levels:
            m = presets.make_preset(model.name, {**model.params, "nt": n, "nx": n})
            g = presets.preset_grid(m)
            res = solver.picard_solve(m, g, **opts)
            err = _sup_rel(res.u, exact)
            w = res.weight(g.times)
            ref = exact(g.times[:, None], g.x[None, :])
            werr = float(np.max(np.abs(res.u.values - ref) / w[:, None]))
            rate = None if prev is None else math.log(prev[1] / err) / math.log(n / prev[0]) if err > 0 else math.inf
            rows.append((g.n_t, g.n_x, err, rate, werr, res))
            prev = (n, err)
    except (ModelError, solver.SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    table = "N_t,N_x,sup_err,rate\n" + "".join(f"{a},{b},{_fmt(e)},{_fmt(r)}\n" for a, b, e, r, *_ in rows)
    print(table, end="")
    for a, b, e, r, werr, _ in rows:
        print(f"# N_t={a}: weighted error {werr:.3e}")
    ok = rows[-1][2] <= threshold
    if model.name == "delayed":
        res = rows[-1][-1]
        r_true = presets.delayed_growth_rate(model.params["beta"], model.params["mu"], model.params["tau"])
        r_hat = fitted_log_slope(res.z, model.a / 2, model.a)
        print(f"# growth rate: fitted {r_hat:.6f}, exact {r_true:.6f}, |diff| {abs(r_hat - r_true):.2e}")
        ok = ok and abs(r_hat - r_true) <= float(cmp.get("rate_tol", 1e-2))
    if cfg.get("output") or out_override:
        out = _output_dir(cfg, out_override)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.csv").write_text(table)
    return EXIT_OK if ok else EXIT_FAIL


def convergence_study(config, out_override=None) -> int:
    try:
        cfg = load_config(config)
        model = build_model(cfg)
        if not _gate_consistency(model, cfg).passed:
            return EXIT_FAIL
        constants = _constants_for(model, cfg)
        scales = [float(s) for s in cfg.get("study", {}).get("scales", [0.5, 1.0, 2.0])]
        opts = _solver_opts(cfg)
        sols = []
        for sc in scales:
            g = build_grid(cfg, model, sc)
            sols.append(solver.picard_solve(model, g, constants=constants, **opts))
    except (ConfigError, ModelError, ExpressionError, solver.SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    fine = sols[-1].u
    rows, prev = [], None
    for sc, res in zip(scales[:-1], sols[:-1]):
        g = res.u.grid
        ref = np.stack([fine.value(t, g.x) for t in g.times])
        diff = float(np.max(np.abs(res.u.values - ref)))
        rate = None if prev is None or diff == 0 else math.log(prev[1] / diff) / math.log(sc / prev[0])
        rows.append((g.n_t, g.n_x, diff, float(res.z.values[-1]), rate))
        prev = (sc, diff)
    g = fine.grid
    rows.append((g.n_t, g.n_x, None, float(sols[-1].z.values[-1]), None))
    table = "N_t,N_x,sup_diff,z_end,rate\n" + "".join(
        f"{a},{b},{_fmt(d)},{_fmt(z)},{_fmt(r)}\n" for a, b, d, z, r in rows)
    print(table, end="")
    out = _output_dir(cfg, out_override)
    out.mkdir(parents=True, exist_ok=True)
    (out / "study.csv").write_text(table)
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mvf", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "solve and write artifacts"), ("check", "check consistency and assumptions"),
                           ("compare", "compare with the closed-form solution"),
                           ("study", "grid-refinement self-convergence")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        if name != "check":
            p.add_argument("-o", "--output", help="output directory (overrides the config)")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return run_simulation(args.config, args.output)
    if args.command == "check":
        return check_model(args.config)
    if args.command == "compare":
        return compare_oracle(args.config, args.output)
    return convergence_study(args.config, args.output)


if __name__ == "__main__":
    sys.exit(main())
