"""Command line runner: one subcommand per operation, artifacts with provenance.

Exit codes: 0 when everything converged and every asserted invariant held,
2 for configuration problems (reported with line numbers before anything
runs), 3 when a solver failed to converge or an existence check refused the
query; partial outputs are still written in that case.

Every CSV artifact starts with provenance comment lines (config hash and
command name) followed by a fixed header row, and is written with explicit
repr-stable float formatting so reruns of the same configuration produce
bit-identical files.  Timing lives only in the JSON run records.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import attainable as at
from . import minnorm as mn
from . import observability as ob
from . import timeopt as to
from .config import ConfigFileError, ExperimentConfig, load_config
from .dual import ConfigurationError, SolverConfig, conjugate_exponent
from .pde import (
    ControlRegion,
    Potential,
    SpatialGrid,
    TimeMesh,
    bochner_norm,
    duality_residual,
    lowest_mode,
    solve_adjoint,
    solve_forward,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOCONV = 3


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.17g}"
    return str(v)


def _write_csv(path, cfg_hash, command, header, rows):
    with open(path, "w") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        fh.write(f"# command={command}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, record):
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _record(cfg: ExperimentConfig, command, started, **payload):
    rec = {
        "command": command,
        "config_hash": cfg.hash,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    rec.update(payload)
    return rec


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map_maybe_parallel(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cmd_forward(cfg: ExperimentConfig, args):
    started = time.monotonic()
    out = _outdir(args)
    mesh = cfg.mesh()
    traj = solve_forward(cfg.grid, cfg.region, cfg.potential, cfg.y0, None, mesh)
    norms = traj.norms(cfg.grid)
    rows = [(j * mesh.dt, float(norms[j])) for j in range(mesh.m + 1)]
    _write_csv(out / "forward.csv", cfg.hash, "forward", ["t", "norm"], rows)
    _write_json(out / "forward.json", _record(
        cfg, "forward", started,
        final_norm=float(norms[-1]), T=cfg.T, m=cfg.m,
    ))
    print(f"forward: final state norm {norms[-1]:.6e} at T={cfg.T:g}")
    return EXIT_OK


def cmd_min_norm(cfg: ExperimentConfig, args):
    started = time.monotonic()
    out = _outdir(args)
    res = mn.norm_value(cfg.grid, cfg.region, cfg.potential, cfg.y0,
                        cfg.T, cfg.p, cfg.solver, cfg.m)
    mz = res.minimizer
    payload = dict(
        T=cfg.T, p=cfg.p, N_p=res.value, converged=res.converged,
        primal_dual_gap=res.primal_dual_gap, rel_grad=mz.rel_grad,
        defect=mz.defect, iterations=mz.iterations, delta=mz.delta,
        epsilon=mz.epsilon,
    )
    if res.converged:
        resid = mn.null_residual(cfg.grid, cfg.region, cfg.potential, cfg.y0, res.control)
        payload["null_residual"] = resid
        mesh = cfg.mesh()
        prof = math.sqrt(cfg.grid.h) * np.linalg.norm(res.control.values, axis=1)
        rows = [(j * mesh.dt, float(prof[j])) for j in range(mesh.m + 1)]
        _write_csv(out / "min_norm_profile.csv", cfg.hash, "min-norm",
                   ["t", "profile"], rows)
    _write_json(out / "min_norm.json", _record(cfg, "min-norm", started, **payload))
    if not res.converged:
        print(f"min-norm: NOT CONVERGED (rel_grad {mz.rel_grad:.3e}, defect {mz.defect:.3e})")
        return EXIT_NOCONV
    print(f"min-norm: N_p={res.value:.8f} gap={res.primal_dual_gap:.2e} "
          f"null={payload['null_residual']:.2e}")
    return EXIT_OK


def cmd_norm_curve(cfg: ExperimentConfig, args):
    started = time.monotonic()
    out = _outdir(args)
    if cfg.norm_curve_horizons is None:
        print("norm-curve: config needs a norm_curve.horizons list", file=sys.stderr)
        return EXIT_CONFIG

    def one(T):
        return mn.norm_value(cfg.grid, cfg.region, cfg.potential, cfg.y0,
                             T, cfg.p, cfg.solver, cfg.m)

    results = _map_maybe_parallel(one, cfg.norm_curve_horizons, args.threads)
    curve = mn.NormCurve(
        horizons=cfg.norm_curve_horizons,
        values=[r.value for r in results],
        converged=[r.converged for r in results],
        gaps=[r.primal_dual_gap for r in results],
        p=cfg.p,
    )
    rows = list(zip(curve.horizons, curve.values, curve.converged, curve.gaps))
    _write_csv(out / "norm_curve.csv", cfg.hash, "norm-curve",
               ["T", "N_p", "converged", "primal_dual_gap"], rows)
    decreasing = curve.is_strictly_decreasing()
    _write_json(out / "norm_curve.json", _record(
        cfg, "norm-curve", started,
        strictly_decreasing=decreasing, all_converged=curve.all_converged,
        partial=not curve.all_converged, violations=curve.violations(),
    ))
    if not curve.all_converged:
        print("norm-curve: PARTIAL, some samples did not converge")
        return EXIT_NOCONV
    if not decreasing:
        print(f"norm-curve: monotonicity violated at {curve.violations()}; "
              "treat as a solver-accuracy failure")
        return EXIT_NOCONV
    print(f"norm-curve: {len(rows)} samples, strictly decreasing")
    return EXIT_OK


def _run_time_optimal(cfg: ExperimentConfig, args, command):
    started = time.monotonic()
    out = _outdir(args)
    if cfg.time_optimal is None:
        print(f"{command}: config needs a time_optimal section with M", file=sys.stderr)
        return EXIT_CONFIG, None, None, started, out
    sec = cfg.time_optimal
    bracket = sec.get("bracket")
    try:
        query = to.TimeOptimalQuery(
            M=float(sec["M"]), p=cfg.p,
            bracket=tuple(bracket) if bracket else None,
            tol=float(sec.get("tol", 1e-4)),
        )
    except (TypeError, ValueError) as exc:
        print(f"{command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None, None, started, out
    try:
        res = to.time_optimal_solve(cfg.grid, cfg.region, cfg.potential, cfg.y0,
                                    query, cfg.solver, cfg.m)
    except to.NoOptimalControl as exc:
        _write_json(out / f"{command.replace('-', '_')}.json", _record(
            cfg, command, started, M=query.M, p=cfg.p,
            error="NoOptimalControl", detail=str(exc),
        ))
        print(f"{command}: {exc}")
        return EXIT_NOCONV, None, query, started, out
    except to.BracketError as exc:
        print(f"{command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None, query, started, out
    return None, res, query, started, out


def cmd_time_optimal(cfg: ExperimentConfig, args, command="time-optimal"):
    status, res, query, started, out = _run_time_optimal(cfg, args, command)
    if status is not None:
        return status
    name = command.replace("-", "_")
    if not res.converged:
        _write_json(out / f"{name}.json", _record(
            cfg, command, started, M=query.M, p=cfg.p, converged=False,
            message=res.message, history=res.history,
        ))
        print(f"{command}: NOT CONVERGED ({res.message})")
        return EXIT_NOCONV
    report = to.bangbang_check(res.control, cfg.p, query.M, res.T_star,
                               cfg.grid, cfg.potential)
    record = _record(
        cfg, command, started,
        M=query.M, p=cfg.p, T_star=res.T_star,
        saturation_residual=report.saturation_residual,
        flatness_residual=report.flatness_residual,
        verdict=bool(report.verdict),
        conditional=bool(report.conditional),
        null_residual=res.null_residual,
        norm_at_T_star=res.norm_at_T_star,
        bisections=res.bisections,
        converged=True,
    )
    _write_json(out / f"{name}.json", record)
    mesh = res.control.mesh
    prof = math.sqrt(cfg.grid.h) * np.linalg.norm(res.control.values, axis=1)
    rows = [(j * mesh.dt, float(prof[j])) for j in range(mesh.m + 1)]
    _write_csv(out / f"{name}_profile.csv", cfg.hash, command, ["t", "profile"], rows)
    print(f"{command}: T_star={res.T_star:.8f} sat={report.saturation_residual:.2e} "
          f"flat={report.flatness_residual:.2e} verdict={report.verdict} "
          f"null={res.null_residual:.2e}"
          + (" (conditional: potential not separable)" if report.conditional else ""))
    return EXIT_OK


def cmd_bangbang(cfg: ExperimentConfig, args):
    return cmd_time_optimal(cfg, args, command="bangbang")


def cmd_attainable_roundtrip(cfg: ExperimentConfig, args):
    started = time.monotonic()
    out = _outdir(args)
    sec = cfg.attainable or {}
    q_list = sec.get("q_list", [1.5, 2.0, 3.0])
    trials = int(sec.get("trials", 1))
    tol = float(sec.get("tol", 1e-7))
    solver = SolverConfig(tol=tol, seed=cfg.solver.seed)
    mesh = cfg.mesh()
    rng = np.random.default_rng(cfg.solver.seed)
    x = cfg.grid.nodes
    modes = [np.sin((k + 1) * math.pi * x / cfg.grid.L) for k in range(5)]

    jobs = []
    for q in q_list:
        for _ in range(trials):
            coeff = 0.8 ** np.arange(5) * rng.standard_normal(5)
            z = sum(c * v for c, v in zip(coeff, modes))
            jobs.append((float(q), z))

    def one(job):
        q, z = job
        el = at.XiElement(cfg.grid, cfg.region, cfg.potential, mesh, z, q)
        rep = at.roundtrip(el, solver)
        return rep

    reports = _map_maybe_parallel(one, jobs, args.threads)
    rows = [(r.q, r.xi_norm, r.u_norm, r.recovered_err, r.attainable_gap)
            for r in reports]
    _write_csv(out / "attainable_roundtrip.csv", cfg.hash, "attainable-roundtrip",
               ["q", "xi_norm", "u_norm", "recovered_err", "attainable_gap"], rows)
    ok = all(r.converged for r in reports)
    _write_json(out / "attainable_roundtrip.json", _record(
        cfg, "attainable-roundtrip", started,
        converged=ok,
        worst_recovered=max(r.recovered_err for r in reports),
        worst_gap=max(r.attainable_gap for r in reports),
    ))
    if not ok:
        print("attainable-roundtrip: some reach-target solves did not converge")
        return EXIT_NOCONV
    print(f"attainable-roundtrip: {len(rows)} cases, worst recovered error "
          f"{max(r.recovered_err for r in reports):.2e}")
    return EXIT_OK


def cmd_shift_density(cfg: ExperimentConfig, args):
    started = time.monotonic()
    out = _outdir(args)
    fractions = cfg.shift_fractions or [0.2, 0.1, 0.05, 0.025]
    mesh = cfg.mesh()
    x = cfg.grid.nodes
    z = np.sin(math.pi * x / cfg.grid.L) + 0.6 * np.sin(2 * math.pi * x / cfg.grid.L)
    q = conjugate_exponent(cfg.p)
    try:
        el = at.XiElement(cfg.grid, cfg.region, cfg.potential, mesh, z, q)
        rep = at.shift_density_check(el, fractions)
    except ValueError as exc:
        print(f"shift-density: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = list(zip(rep.fractions, rep.residuals))
    _write_csv(out / "shift_density.csv", cfg.hash, "shift-density",
               ["fraction", "residual"], rows)
    decreasing = rep.is_strictly_decreasing()
    _write_json(out / "shift_density.json", _record(
        cfg, "shift-density", started,
        strictly_decreasing=decreasing, xi_norm=rep.xi_norm, q=q,
    ))
    print(f"shift-density: residuals {['%.3e' % r for r in rep.residuals]} "
          f"decreasing={decreasing}")
    return EXIT_OK if decreasing else EXIT_NOCONV


def cmd_observability(cfg: ExperimentConfig, args):
    started = time.monotonic()
    out = _outdir(args)
    if cfg.observability is None:
        print("observability: config needs an observability section "
              "(t, horizons, dt)", file=sys.stderr)
        return EXIT_CONFIG
    sec = cfg.observability
    acfg = ob.AscentConfig(
        trials=int(sec.get("trials", 8)),
        max_iter=int(sec.get("max_iter", 300)),
        tol=float(sec.get("tol", 1e-8)),
        seed=cfg.solver.seed,
    )
    try:
        ests = ob.beta_curve(cfg.grid, cfg.region, cfg.potential,
                             float(sec["t"]), [float(T) for T in sec["horizons"]],
                             float(sec["dt"]), acfg)
        fit = ob.beta_bound_fit(ests)
    except (ValueError, ob.ObservabilityError) as exc:
        print(f"observability: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = [(e.t, e.T, e.value, e.single_mode_lower_bound, fit.C0) for e in ests]
    _write_csv(out / "observability.csv", cfg.hash, "observability",
               ["t", "T", "beta", "lower_bound", "C0_fit"], rows)
    slack = 1.0 + 2.0 * acfg.tol
    monotone = all(b.value <= a.value * slack for a, b in zip(ests, ests[1:]))
    bound_ok = all(e.value >= e.single_mode_lower_bound - 1e-9 for e in ests)
    _write_json(out / "observability.json", _record(
        cfg, "observability", started,
        C0=fit.C0, max_fit_residual=fit.max_residual,
        monotone_in_T=monotone, above_single_mode=bound_ok,
    ))
    print(f"observability: C0={fit.C0:.5f} monotone={monotone} "
          f"betas {['%.4g' % e.value for e in ests]}")
    return EXIT_OK if (monotone and bound_ok) else EXIT_NOCONV


def _selftest_default_config():
    grid = SpatialGrid(1.0, 50)
    region = ControlRegion(0.3, 0.7)
    potential = Potential.zero()
    x = grid.nodes
    y0 = np.sin(np.pi * x) + 0.4 * np.sin(2 * np.pi * x)
    y0 /= grid.norm(y0)
    return grid, region, potential, y0


def cmd_selftest(cfg, args):
    started = time.monotonic()
    grid, region, potential, y0 = _selftest_default_config()
    mesh = TimeMesh(0.2, 100)
    solver = SolverConfig()
    rng = np.random.default_rng(0)
    checks = []

    def check(name, ok, detail):
        checks.append(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")

    worst = 0.0
    for _ in range(5):
        v = rng.standard_normal((mesh.m + 1, grid.n))
        z = rng.standard_normal(grid.n)
        worst = max(worst, duality_residual(grid, region, potential, v, z, mesh))
    check("duality identity", worst <= 1e-12, f"max residual {worst:.3e}")

    res = mn.norm_value(grid, region, potential, y0, 0.2, 2.0, solver, 100)
    ok = res.converged and res.primal_dual_gap <= 10.0 * solver.tol
    check("min-norm value (p=2)", ok,
          f"N={res.value:.6f} gap={res.primal_dual_gap:.2e} conv={res.converged}")

    resid = mn.null_residual(grid, region, potential, y0, res.control)
    check("null steering", resid <= 1e-4, f"relative final norm {resid:.3e}")

    trials = [rng.standard_normal(grid.n) for _ in range(8)] + [-res.minimizer.z_hat]
    sup = mn.dual_sup_check(grid, region, potential, y0, 0.2, 2.0, trials, 100)
    ok = sup <= res.value + 1e-9 and abs(sup - res.value) / res.value <= 10.0 * solver.tol
    check("ratio form of the norm", ok, f"sup {sup:.8f} vs N {res.value:.8f}")

    el = at.XiElement(grid, region, potential, mesh, rng.standard_normal(grid.n), 1.5)
    u = at.u_xi(el)
    err = abs(bochner_norm(u, grid, mesh, 3.0) - el.norm) / el.norm
    check("norm preservation (q=1.5)", err <= 1e-12, f"relative error {err:.3e}")

    pot2 = Potential.separable(a1=0.0, a2=lambda t: np.cos(t))
    z = rng.standard_normal(grid.n)
    phi2 = solve_adjoint(grid, region, pot2, z, mesh)
    phi0 = solve_adjoint(grid, region, potential, z, mesh)
    gres = float(np.max(np.abs(at.gauge_transform(phi2, lambda t: np.cos(t)).states
                               - phi0.states)))
    scale = float(np.max(np.abs(phi0.states)))
    check("gauge identity", gres / scale <= 1e-6, f"relative residual {gres / scale:.3e}")

    oracle = ob.single_mode_ratio(grid, 0.1, 0.2, 100)
    full = ControlRegion(0.0, 1.0)
    ops = ob._RatioOps(grid, full, potential, 0.1, 0.2, 100)
    _, v1 = lowest_mode(grid)
    r1 = ops.ratio(v1)
    check("single-mode observability oracle", abs(r1 - oracle) / oracle <= 1e-10,
          f"ratio {r1:.8f} vs oracle {oracle:.8f}")

    ok = all(checks)
    print(f"selftest: {sum(checks)}/{len(checks)} checks passed "
          f"({time.monotonic() - started:.1f}s)")
    return EXIT_OK if ok else EXIT_NOCONV


_COMMANDS = {
    "forward": (cmd_forward, True),
    "min-norm": (cmd_min_norm, True),
    "norm-curve": (cmd_norm_curve, True),
    "time-optimal": (cmd_time_optimal, True),
    "bangbang": (cmd_bangbang, True),
    "attainable-roundtrip": (cmd_attainable_roundtrip, True),
    "shift-density": (cmd_shift_density, True),
    "observability": (cmd_observability, True),
    "selftest": (cmd_selftest, False),
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="heatctrl",
        description="Minimal-norm and minimal-time controls for internally "
                    "controlled one-dimensional heat equations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, needs_config) in _COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=needs_config,
                        help="YAML configuration file")
        sp.add_argument("--out", default=".", help="output directory for artifacts")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the configured seed")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent sweep samples")
    args = parser.parse_args(argv)

    fn, needs_config = _COMMANDS[args.command]
    cfg = None
    if needs_config:
        try:
            cfg = load_config(args.config)
        except ConfigFileError as exc:
            for msg in exc.messages:
                print(f"config error: {msg}", file=sys.stderr)
            return EXIT_CONFIG
        if args.seed is not None:
            from dataclasses import replace

            cfg.solver = replace(cfg.solver, seed=args.seed)
    try:
        return fn(cfg, args)
    except (ConfigurationError, ConfigFileError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
