"""Command-line entry point: run, sweep, validate, compare.

Configuration is a flat key/value text file (``key = value`` per line,
``#`` comments) overridden by command-line flags.  Every run emits a manifest
with all effective parameters, a ``records.csv`` with one row per iteration
(streamed, so partial results survive solver failures), and plain-text field
dumps of the final distribution, value function, and control.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bench1d import (PRESETS, Benchmark, BenchParams, build_benchmark,
                      first_k_below, without_coupling, zone_mass)
from .gfw import (GfwConfig, RECORD_COLUMNS, SolveResult, record_row, solve)
from .kernel import KernelValidationError, random_kernel
from .potential import potential_increment
from .theta import cfl_check, write_field


class ConfigError(ValueError):
    pass


@dataclass
class Settings:
    preset: Optional[str] = None
    N: Optional[int] = None
    T: Optional[int] = None
    theta: Optional[float] = None
    sigma: Optional[float] = None
    M: Optional[float] = None
    Lf: Optional[float] = None
    a1: Optional[float] = None
    a2: Optional[float] = None
    k0: Optional[float] = None
    k1: Optional[float] = None
    k2: Optional[float] = None
    q: Optional[int] = None
    stepsize: str = "line-search"
    iters: int = 1000
    tol: float = 0.0
    tol_relative: bool = False
    out: str = "mfgfw-out"
    dump_fields_every: int = 0
    assert_descent: bool = False
    seed: int = 0
    no_coupling: bool = False


_BOOL_KEYS = {"tol_relative", "assert_descent", "no_coupling"}
_INT_KEYS = {"N", "T", "q", "iters", "dump_fields_every", "seed"}
_FLOAT_KEYS = {"theta", "sigma", "M", "Lf", "a1", "a2", "k0", "k1", "k2", "tol"}


def load_config_file(path: str) -> dict:
    values = {}
    known = {f.name for f in fields(Settings)}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in _BOOL_KEYS:
            values[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


def merge_settings(args: argparse.Namespace) -> Settings:
    settings = Settings()
    if getattr(args, "config", None):
        for key, value in load_config_file(args.config).items():
            setattr(settings, key, value)
    for f in fields(Settings):
        cli_value = getattr(args, f.name, None)
        if cli_value is not None and cli_value is not False:
            setattr(settings, f.name, cli_value)
    return settings


def parse_stepsize(text: str) -> tuple[str, Optional[float]]:
    mapping = {"open-loop": "open_loop", "line-search": "line_search",
               "best-response": "best_response"}
    if text in mapping:
        return mapping[text], None
    if text.startswith("fixed:"):
        return "fixed", float(text.split(":", 1)[1])
    raise ConfigError(
        f"stepsize must be open-loop, line-search, best-response or fixed:<l>, got {text!r}")


def bench_params(settings: Settings) -> BenchParams:
    if settings.preset and settings.preset not in PRESETS:
        raise ConfigError(f"unknown preset {settings.preset!r}")
    base = PRESETS[settings.preset].params if settings.preset else BenchParams()
    overrides = {}
    for src, dst in (("N", "N"), ("T", "T"), ("theta", "theta"), ("sigma", "sigma"),
                     ("M", "M"), ("Lf", "L_f_c"), ("a1", "a1"), ("a2", "a2"),
                     ("k0", "k0"), ("k1", "k1"), ("k2", "k2"), ("q", "q")):
        value = getattr(settings, src)
        if value is not None:
            overrides[dst] = value
    params = replace(base, **overrides)
    if settings.no_coupling:
        params = without_coupling(params)
    return params


def gfw_config(settings: Settings) -> GfwConfig:
    rule, lam = parse_stepsize(settings.stepsize)
    return GfwConfig(
        stepsize_rule=rule, fixed_lambda=lam, max_iters=settings.iters,
        tol_gamma_bar=settings.tol, tol_relative=settings.tol_relative,
        assert_descent=settings.assert_descent,
        record_fields_every=settings.dump_fields_every)


def write_manifest(path: Path, entries: dict, append: bool = False) -> None:
    mode = "a" if append else "w"
    with path.open(mode) as fh:
        for key, value in entries.items():
            if isinstance(value, float):
                fh.write(f"{key} = {value!r}\n")
            else:
                fh.write(f"{key} = {value}\n")


def manifest_entries(command: str, settings: Settings, bench: Benchmark) -> dict:
    report = cfl_check(bench.cfg)
    p = bench.params
    return {
        "command": command, "version": __version__,
        "preset": settings.preset or "-",
        "N": p.N, "T": p.T, "h": bench.grid.h, "dt": bench.grid.dt,
        "theta": p.theta, "sigma": p.sigma,
        "M": bench.cfg.M,
        "M_policy": "explicit" if p.M is not None else "cfl-bullet2",
        "a1": p.a1, "a2": p.a2, "k0": p.k0, "k1": p.k1, "k2": p.k2, "q": p.q,
        "L_f_c": p.coupling_lipschitz, "L_f": bench.problem.L_f,
        "alpha": bench.problem.alpha, "m0_defect": bench.m0_defect,
        "stepsize": settings.stepsize, "iters": settings.iters,
        "tol": settings.tol, "tol_relative": settings.tol_relative,
        "assert_descent": settings.assert_descent,
        "dump_fields_every": settings.dump_fields_every,
        "seed": settings.seed, "no_coupling": settings.no_coupling,
        "cfl_max_dt": report.max_dt,
        "cfl_bullet1_ok": report.bullet1_ok,
        "cfl_bullet1_margin": report.bullet1_margin,
        "cfl_bullet2_threshold": report.bullet2_threshold,
        "cfl_bullet2_ok": report.bullet2_ok,
        "velocity_positivity_bound": bench.cfg.positivity_velocity_bound,
    }


def execute_run(command: str, settings: Settings, bench: Benchmark,
                out_dir: Path) -> SolveResult:
    """Solve one instance, streaming records and writing all artifacts."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest"
    write_manifest(manifest, manifest_entries(command, settings, bench))
    fields_dir = out_dir / "fields"
    config = gfw_config(settings)
    grid = bench.grid

    def on_fields(k: int, m, u, v) -> None:
        fields_dir.mkdir(exist_ok=True)
        for kind, curve in (("m", m), ("u", u), ("v", v)):
            with (fields_dir / f"k{k:05d}_{kind}.csv").open("w") as fh:
                write_field(fh, curve, grid, kind)

    with (out_dir / "records.csv").open("w") as records_fh:
        records_fh.write(",".join(RECORD_COLUMNS) + "\n")

        def on_record(rec) -> None:
            records_fh.write(record_row(rec) + "\n")
            records_fh.flush()

        result = solve(bench.problem, bench.scheme(), bench.coupling, config,
                       on_record=on_record, on_fields=on_fields)

    for kind, curve in (("m", result.pair.m), ("u", result.u), ("v", result.v)):
        with (out_dir / f"{kind}_final.csv").open("w") as fh:
            write_field(fh, curve, grid, kind)

    last = result.records[-1]
    write_manifest(manifest, {
        "iterations": result.iterations,
        "stop_reason": result.stop_reason,
        "gamma_bar_final": last.gamma_bar,
        "J_tilde_final": last.J_tilde,
        "mass_error_final": last.mass_error,
        "min_m_final": last.min_m,
        "max_control_norm": result.max_control_norm,
        "velocity_bound_ok": result.max_control_norm
                             <= bench.cfg.positivity_velocity_bound,
        "congestion_zone_mass": zone_mass(result.pair.m, grid),
    }, append=True)
    return result


def cmd_run(settings: Settings) -> int:
    bench = build_benchmark(bench_params(settings))
    execute_run("run", settings, bench, Path(settings.out))
    return 0


def cmd_sweep(settings: Settings) -> int:
    if settings.preset and PRESETS[settings.preset].meshes:
        meshes = PRESETS[settings.preset].meshes
    else:
        raise ConfigError("sweep needs a preset with a mesh list "
                          "(desk-sweep or paper-sweep)")
    out_dir = Path(settings.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tol = settings.tol if settings.tol > 0 else 1e-4
    rows = []
    for n_space, n_time in meshes:
        mesh_settings = replace_settings(settings, N=n_space, T=n_time)
        bench = build_benchmark(bench_params(mesh_settings))
        sub = out_dir / f"N{n_space:05d}_T{n_time:05d}"
        result = execute_run("sweep", mesh_settings, bench, sub)
        k_star = first_k_below(result.records, tol, relative=True)
        rows.append((bench.grid.h, bench.grid.dt, k_star,
                     result.records[-1].gamma_bar))
    with (out_dir / "summary.csv").open("w") as fh:
        fh.write("h,dt,k_star,final_gamma_bar\n")
        for h, dt, k_star, final in rows:
            fh.write(f"{h!r},{dt!r},{k_star},{final!r}\n")
    write_manifest(out_dir / "manifest", {
        "command": "sweep", "version": __version__,
        "preset": settings.preset, "meshes": ";".join(f"{n}x{t}" for n, t in meshes),
        "k_star_tol": tol, "k_star_relative": True,
        "stepsize": settings.stepsize, "iters": settings.iters,
        "seed": settings.seed,
    })
    return 0


def replace_settings(settings: Settings, **kwargs) -> Settings:
    clone = Settings(**{f.name: getattr(settings, f.name) for f in fields(Settings)})
    for key, value in kwargs.items():
        setattr(clone, key, value)
    return clone


def cmd_compare(settings: Settings) -> int:
    out_dir = Path(settings.out)
    with_dir, without_dir = out_dir / "with", out_dir / "without"
    bench_with = build_benchmark(bench_params(settings))
    res_with = execute_run("compare", settings, bench_with, with_dir)
    off = replace_settings(settings, no_coupling=True)
    bench_without = build_benchmark(bench_params(off))
    res_without = execute_run("compare", off, bench_without, without_dir)
    mass_with = zone_mass(res_with.pair.m, bench_with.grid)
    mass_without = zone_mass(res_without.pair.m, bench_without.grid)
    write_manifest(out_dir / "manifest", {
        "command": "compare", "version": __version__,
        "zone_mass_with_coupling": mass_with,
        "zone_mass_without_coupling": mass_without,
        "zone_mass_relative_reduction":
            (mass_without - mass_with) / mass_without if mass_without else np.nan,
    })
    return 0


def cmd_validate(settings: Settings) -> int:
    bench = build_benchmark(bench_params(settings))
    rng = np.random.default_rng(settings.seed)
    results: list[tuple[str, bool, str]] = []

    try:
        random_kernel(rng, n=4, T=3, d=1, control_bound=1.0)
        results.append(("kernel-assumptions", True, "random kernel accepted"))
    except KernelValidationError as exc:
        results.append(("kernel-assumptions", False, str(exc)))

    n = bench.grid.n_points
    worst = np.inf
    for _ in range(50):
        m1 = rng.dirichlet(np.ones(n))
        m2 = rng.dirichlet(np.ones(n))
        gap = float((bench.problem.f(0, m1) - bench.problem.f(0, m2)) @ (m1 - m2))
        worst = min(worst, gap)
    results.append(("coupling-monotonicity", worst >= -1e-12,
                    f"worst pairing {worst:.3e}"))

    worst = 0.0
    for _ in range(20):
        m1 = rng.dirichlet(np.ones(n))
        m2 = rng.dirichlet(np.ones(n))
        t = int(rng.integers(bench.problem.T))
        lhs = bench.coupling.F(t, m1) - bench.coupling.F(t, m2)
        rhs = potential_increment(bench.coupling.f, t, m2, m1)
        worst = max(worst, abs(lhs - rhs))
    results.append(("potential-identity", worst <= 1e-8, f"worst defect {worst:.3e}"))

    report = cfl_check(bench.cfg)
    results.append(("cfl-bullet1", report.bullet1_ok,
                    f"dt = {report.dt:.6g}, max_dt = {report.max_dt:.6g}"))
    print(f"cfl-bullet2-report: h = {report.h:.6g}, threshold = "
          f"{report.bullet2_threshold:.6g}, satisfied = {report.bullet2_ok} "
          f"(informational, not enforced)")

    ok = True
    for name, passed, detail in results:
        print(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")
        ok &= passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfgfw",
        description="Best-response Frank-Wolfe solver for the 1D congestion "
                    "benchmark of a potential mean field game")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("run", "solve one instance"),
            ("sweep", "solve the same instance on a list of meshes"),
            ("validate", "check the structural assumptions and the CFL report"),
            ("compare", "run with and without the congestion coupling")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--N", type=int)
        p.add_argument("--T", type=int)
        p.add_argument("--theta", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--M", type=float)
        p.add_argument("--Lf", type=float, help="coupling Lipschitz constant "
                       "of the continuous data (line-search curvature)")
        for key in ("a1", "a2", "k0", "k1", "k2"):
            p.add_argument(f"--{key}", type=float)
        p.add_argument("--q", type=int, help="quadrature order per cell")
        p.add_argument("--stepsize",
                       help="open-loop | line-search | best-response | fixed:<l>")
        p.add_argument("--iters", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--tol-relative", dest="tol_relative", action="store_true",
                       default=None)
        p.add_argument("--out")
        p.add_argument("--dump-fields-every", dest="dump_fields_every", type=int)
        p.add_argument("--assert-descent", dest="assert_descent",
                       action="store_true", default=None)
        p.add_argument("--seed", type=int)
        p.add_argument("--no-coupling", dest="no_coupling", action="store_true",
                       default=None)
    return parser


_COMMANDS = {"run": cmd_run, "sweep": cmd_sweep,
             "validate": cmd_validate, "compare": cmd_compare}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = merge_settings(args)
        parse_stepsize(settings.stepsize)  # fail fast on malformed rules
        return _COMMANDS[args.command](settings)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
