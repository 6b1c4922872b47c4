"""Command-line entry point: config parsing and experiment orchestration.

Subcommands: minimize, phase-diagram, tangent-study, analytic, energy,
verify. Each experiment is driven by a flat ``key = value`` config file
(dotted keys group the grid, kernel and solver sections). All file output
is atomic (temp file + rename) and every run logs one machine-readable
summary line.

Exit codes: 0 success, 2 invalid config or usage, 3 infeasible problem,
4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from .analytic import (
    AnalyticError,
    analytic_minimizer,
    classify_regime,
)
from .energy import EnergyError, energy
from .field import (
    DensityField,
    FieldError,
    Grid,
    PhasePair,
    read_field,
    write_field,
)
from .kernel import KernelError, KernelSpec
from .solver import (
    InfeasibleError,
    SolverConfig,
    SolverError,
    minimize_multistart,
    sweep,
    tangent_ball_study,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4


class ConfigError(ValueError):
    """Raised on malformed or incomplete experiment configs."""


def parse_config(path):
    """Read a flat ``key = value`` config file with # comments."""
    cfg = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                cfg[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return cfg


def _get(cfg, key, cast, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing config key {key!r}")
        return default
    try:
        return cast(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r}") from exc


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def build_grid(cfg):
    dim = _get(cfg, "grid.dim", int)
    n = _get(cfg, "grid.n", int)
    h = _get(cfg, "grid.h", float)
    try:
        return Grid.centered(dim, n, h)
    except FieldError as exc:
        raise ConfigError(str(exc)) from exc


def build_kernel(cfg, dim):
    kind = _get(cfg, "kernel.kind", str, "coulomb")
    try:
        if kind == "coulomb":
            constant = _get(cfg, "kernel.coulomb_constant", str, "fundamental")
            return KernelSpec.coulomb(dim, constant)
        if kind == "top_hat":
            return KernelSpec.top_hat(_get(cfg, "kernel.rho", float))
        if kind == "tent":
            return KernelSpec.tent(_get(cfg, "kernel.rho", float))
        if kind == "gaussian":
            return KernelSpec.gaussian(_get(cfg, "kernel.sigma", float))
        if kind == "tabulated_radial":
            path = _get(cfg, "kernel.table_path", str)
            radii, values = [], []
            with open(path, newline="") as fh:
                for row in csv.reader(fh):
                    if not row or row[0].startswith("#"):
                        continue
                    radii.append(float(row[0]))
                    values.append(float(row[1]))
            return KernelSpec.tabulated(radii, values)
    except (KernelError, OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"bad kernel config: {exc}") from exc
    raise ConfigError(f"unknown kernel kind {kind!r}")


def build_solver_config(cfg):
    grid = build_grid(cfg)
    kernel = build_kernel(cfg, grid.dim)
    step = _get(cfg, "solver.step", float, 0.0)
    step_rule = ("fixed", step) if step > 0 else ("backtracking", 0.5, 1e-4)
    try:
        return SolverConfig(
            grid=grid,
            kernel=kernel,
            c11=_get(cfg, "c11", float),
            c22=_get(cfg, "c22", float),
            m1=_get(cfg, "m1", float),
            m2=_get(cfg, "m2", float),
            max_iters=_get(cfg, "solver.max_iters", int, 5000),
            energy_tol=_get(cfg, "solver.energy_tol", float, 1e-9),
            stat_tol=_get(cfg, "solver.stat_tol", float, 1e-6),
            step_rule=step_rule,
            init=_get(cfg, "solver.init", str, "analytic"),
            seed=_get(cfg, "seed", int, 0),
        )
    except SolverError as exc:
        raise ConfigError(str(exc)) from exc


def atomic_write_text(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _summary(command, **fields):
    rec = {"command": command}
    rec.update(fields)
    print("SUMMARY " + json.dumps(rec, sort_keys=True))


def emit_radial_profile(pair):
    """CSV with shell means of both phases in shells of width h."""
    grid = pair.grid
    dist = np.sqrt(grid.distance_sq()).ravel()
    shell = np.floor(dist / grid.h).astype(int)
    n_shells = int(shell.max()) + 1
    counts = np.bincount(shell, minlength=n_shells)
    s1 = np.bincount(shell, weights=pair.f1.values.ravel(), minlength=n_shells)
    s2 = np.bincount(shell, weights=pair.f2.values.ravel(), minlength=n_shells)
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["radius", "f1_mean", "f2_mean"])
    for k in range(n_shells):
        if counts[k] == 0:
            continue
        writer.writerow(
            [f"{(k + 0.5) * grid.h:.10g}", f"{s1[k] / counts[k]:.12g}",
             f"{s2[k] / counts[k]:.12g}"]
        )
    return out.getvalue()


def _out_path(cfg, name, default_dir="."):
    out_dir = cfg.get("output.dir", default_dir)
    os.makedirs(out_dir, exist_ok=True)
    prefix = cfg.get("output.prefix", "run")
    return os.path.join(out_dir, f"{prefix}_{name}")


def cmd_minimize(args):
    cfg = parse_config(args.config)
    sc = build_solver_config(cfg)
    n_starts = _get(cfg, "solver.n_starts", int, 5)
    res = minimize_multistart(sc, n_starts=n_starts)
    write_field(res.pair.f1, _out_path(cfg, "f1.df"))
    write_field(res.pair.f2, _out_path(cfg, "f2.df"))
    record = {
        "status": res.status,
        "iterations": res.iterations,
        "energy": res.I_value,
        "energy_trace_first": res.energy_trace[0],
        "energy_trace_last": res.energy_trace[-1],
        "stationarity": res.stationarity,
        "config": dict(cfg),
    }
    atomic_write_text(_out_path(cfg, "result.json"), json.dumps(record, indent=2))
    atomic_write_text(_out_path(cfg, "profile.csv"), emit_radial_profile(res.pair))
    _summary("minimize", status=res.status, energy=res.I_value,
             iterations=res.iterations)
    if res.status == "boundary_mass_violation":
        return EXIT_INFEASIBLE
    if res.status != "converged":
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_phase_diagram(args):
    cfg = parse_config(args.config)
    sc = build_solver_config(cfg)
    c11s = _get(cfg, "diagram.c11_values", _floats)
    c22s = _get(cfg, "diagram.c22_values", _floats)
    points = [(a, b) for a in c11s for b in c22s]
    rows = sweep(points, sc.m1, sc.m2, sc.kernel, sc)
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["c11", "c22", "energy", "regime", "l1_to_analytic", "status"])
    for row in rows:
        writer.writerow(
            [row["c11"], row["c22"], row.get("energy"), row.get("regime"),
             row.get("l1_to_analytic"), row.get("status")]
        )
    path = _out_path(cfg, "phase_diagram.csv")
    atomic_write_text(path, out.getvalue())
    bad = [r for r in rows if str(r.get("status", "")).startswith("error")]
    _summary("phase-diagram", rows=len(rows), errors=len(bad), path=path)
    return EXIT_OK if not bad else EXIT_NOT_CONVERGED


def cmd_tangent_study(args):
    cfg = parse_config(args.config)
    sc = build_solver_config(cfg)
    c_values = _get(cfg, "tangent.c_values", _floats)
    rows = tangent_ball_study(list(c_values), sc.m1, sc.m2, sc.grid, sc.kernel, sc)
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(
        ["c", "energy", "status", "l1_to_tangent", "barycenter_separation",
         "tangency_distance"]
    )
    for row in rows:
        writer.writerow([row[k] for k in
                         ("c", "energy", "status", "l1_to_tangent",
                          "barycenter_separation", "tangency_distance")])
    path = _out_path(cfg, "tangent_study.csv")
    atomic_write_text(path, out.getvalue())
    _summary("tangent-study", rows=len(rows), path=path)
    return EXIT_OK


def cmd_analytic(args):
    grid = Grid.centered(args.dim, args.n, args.h)
    kernel = KernelSpec.coulomb(args.dim) if args.kernel == "coulomb" else None
    if kernel is None:
        if args.kernel == "gaussian":
            kernel = KernelSpec.gaussian(args.sigma or 1.0)
        elif args.kernel == "top_hat":
            kernel = KernelSpec.top_hat(args.rho or 1.0)
        elif args.kernel == "tent":
            kernel = KernelSpec.tent(args.rho or 1.0)
        else:
            raise ConfigError(f"unknown kernel {args.kernel!r}")
    regime = classify_regime(args.c11, args.c22, args.m1, args.m2,
                             args.dim, kernel.kind)
    if not regime.has_closed_form:
        raise AnalyticError(
            f"regime {regime.label!r} has no closed form; use minimize"
        )
    pair, desc = analytic_minimizer(
        regime, args.c11, args.c22, args.m1, args.m2, grid
    )
    os.makedirs(args.out, exist_ok=True)
    p1 = os.path.join(args.out, "analytic_f1.df")
    p2 = os.path.join(args.out, "analytic_f2.df")
    write_field(pair.f1, p1)
    write_field(pair.f2, p2)
    bd = energy(pair, kernel)
    record = {
        "regime": regime.label,
        "witnesses": list(regime.witnesses),
        "minimizer": desc.as_dict(),
        "energy": bd.as_dict(),
        "fields": [p1, p2],
    }
    atomic_write_text(os.path.join(args.out, "analytic.json"),
                      json.dumps(record, indent=2))
    atomic_write_text(os.path.join(args.out, "analytic_profile.csv"),
                      emit_radial_profile(pair))
    _summary("analytic", regime=regime.label, energy=bd.total)
    return EXIT_OK


def cmd_energy(args):
    f1 = read_field(args.f1)
    f2 = read_field(args.f2)
    grid = f1.grid
    if args.kernel == "coulomb":
        kernel = KernelSpec.coulomb(grid.dim, args.coulomb_constant)
    elif args.kernel == "gaussian":
        kernel = KernelSpec.gaussian(args.sigma or 1.0)
    elif args.kernel == "top_hat":
        kernel = KernelSpec.top_hat(args.rho or 1.0)
    elif args.kernel == "tent":
        kernel = KernelSpec.tent(args.rho or 1.0)
    else:
        raise ConfigError(f"unknown kernel {args.kernel!r}")
    pair = PhasePair(f1, f2, args.c11, args.c22, f1.mass, f2.mass,
                     diagnostic=args.c11 > 0 or args.c22 > 0)
    bd = energy(pair, kernel)
    print(json.dumps(bd.as_dict(), indent=2))
    _summary("energy", total=bd.total)
    return EXIT_OK


def _verify_suites(which):
    """Run the fast property suites; returns a JSON-ready report."""
    from . import verify as verify_mod

    suites = {
        "rearrange": verify_mod.verify_rearrange,
        "projection": verify_mod.verify_projection,
        "gradient": verify_mod.verify_gradient,
    }
    if which != "all":
        if which not in suites:
            raise ConfigError(f"unknown verify suite {which!r}")
        suites = {which: suites[which]}
    report = {}
    ok = True
    for name, fn in suites.items():
        rec = fn()
        report[name] = rec
        ok = ok and rec["ok"]
    report["ok"] = ok
    return report


def cmd_verify(args):
    report = _verify_suites(args.suite)
    print(json.dumps(report, indent=2))
    _summary("verify", ok=report["ok"])
    return EXIT_OK if report["ok"] else 1


def build_parser():
    p = argparse.ArgumentParser(
        prog="phasemix",
        description="Two-species nonlocal interaction energy toolkit",
    )
    sub = p.add_subparsers(dest="command")

    for name, fn in (
        ("minimize", cmd_minimize),
        ("phase-diagram", cmd_phase_diagram),
        ("tangent-study", cmd_tangent_study),
    ):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("analytic")
    sp.add_argument("--c11", type=float, required=True)
    sp.add_argument("--c22", type=float, required=True)
    sp.add_argument("--m1", type=float, required=True)
    sp.add_argument("--m2", type=float, required=True)
    sp.add_argument("--dim", type=int, required=True)
    sp.add_argument("--n", type=int, default=128)
    sp.add_argument("--h", type=float, default=0.05)
    sp.add_argument("--kernel", default="coulomb")
    sp.add_argument("--rho", type=float, default=None)
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--out", default=".")
    sp.set_defaults(func=cmd_analytic)

    sp = sub.add_parser("energy")
    sp.add_argument("--f1", required=True)
    sp.add_argument("--f2", required=True)
    sp.add_argument("--c11", type=float, required=True)
    sp.add_argument("--c22", type=float, required=True)
    sp.add_argument("--kernel", default="coulomb")
    sp.add_argument("--rho", type=float, default=None)
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--coulomb-constant", default="fundamental")
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("verify")
    sp.add_argument("suite", nargs="?", default="all")
    sp.set_defaults(func=cmd_verify)

    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, FieldError, KernelError, EnergyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, AnalyticError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
