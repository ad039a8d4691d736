"""Command-line interface.

Subcommands::

    fedheat run CONFIG            run a scenario, write probes/snapshots/stats
    fedheat check-dt CONFIG       report the critical step for a scenario
    fedheat bench CONFIG          worker sweep (and --sweep for mesh sizes)
    fedheat gen-mesh              write a structured cube mesh file
    fedheat compare-oracle CONFIG cross-check against the implicit reference

CONFIG is a TOML scenario path, or the name of a bundled scenario (try
``conduction.toy``).  Exit codes: 0 success, 1 configuration or input
error, 2 the run went unstable, 3 the oracle comparison failed its
tolerance.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from . import kernels, oracle
from .bench import (
    bench_scaling,
    bench_workers,
    format_scaling_table,
    format_worker_table,
)
from .errors import ConfigError, FedheatError, InstabilityError
from .mesh import serialize_mesh
from .meshgen import generate_cube_mesh
from .scenario import Scenario, load_scenario, parse_scenario_text
from .solver import ExplicitEngine
from .vtkio import write_vtk

log = logging.getLogger("fedheat")

try:
    __version__ = metadata.version("fedheat")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0+unknown"


def bundled_scenarios() -> list[str]:
    root = resources.files("fedheat") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".toy"))


def resolve_scenario(spec: str) -> Scenario:
    path = Path(spec)
    if path.exists():
        return load_scenario(path)
    root = resources.files("fedheat") / "scenarios"
    for candidate in (spec, f"{spec}.toy"):
        entry = root / candidate
        if entry.is_file():
            return parse_scenario_text(
                entry.read_text(), name=candidate.removesuffix(".toy"), base_dir=Path.cwd()
            )
    known = ", ".join(bundled_scenarios())
    raise ConfigError(f"no scenario file or bundled scenario {spec!r} (bundled: {known})")


def _resolve_workers(flag_value: int | None, scenario: Scenario) -> int:
    if flag_value is not None:
        if flag_value < 1:
            raise ConfigError(f"--workers must be >= 1, got {flag_value}")
        return flag_value
    if scenario.workers is not None:
        return scenario.workers
    return kernels.default_workers()


def _write_probes_csv(path: Path, result) -> None:
    header = "time_s," + ",".join(f"node_{int(n)}" for n in result.probe_nodes)
    rows = [header]
    for t, values in zip(result.probe_times, result.probe_values):
        rows.append(",".join([repr(float(t))] + [repr(float(v)) for v in values]))
    path.write_text("\n".join(rows) + "\n")


def _format_stats(stats: dict[str, float]) -> str:
    order = ("min", "q1", "median", "q3", "max", "rms")
    width = max(len(k) for k in order)
    return "\n".join(f"  {k.rjust(width)}: {stats[k]:.6f}" for k in order)


def _cmd_run(args) -> int:
    scenario = resolve_scenario(args.config)
    mesh = scenario.build_mesh()
    workers = _resolve_workers(args.workers, scenario)
    out_dir = Path(args.output or scenario.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    engine = ExplicitEngine(
        mesh,
        scenario.material,
        scenario.boundary,
        td_mode=scenario.td_mode,
        runaway_limit=scenario.runaway_limit,
        dt_recheck_interval=scenario.dt_recheck_interval,
    )
    probe_nodes = scenario.probe_nodes(mesh)

    snapshots: list[str] = []

    def on_snapshot(state) -> None:
        name = f"snapshot_{state.step_index:06d}.vtk"
        write_vtk(
            out_dir / name,
            mesh,
            {"temperature": state.temperatures},
            title=f"{scenario.name} t={state.time!r} s",
        )
        snapshots.append(name)

    steps = args.steps if args.steps is not None else scenario.steps
    result = engine.run(
        scenario.initial_temperature,
        steps=steps,
        dt=scenario.dt,
        auto_dt_safety=scenario.auto_dt_safety,
        workers=workers,
        probes=probe_nodes,
        probe_interval=scenario.probe_interval,
        snapshot_interval=scenario.snapshot_interval,
        on_snapshot=on_snapshot,
    )

    stats = oracle.stats_summary(result.state.temperatures)
    if probe_nodes.size:
        _write_probes_csv(out_dir / "probes.csv", result)
    (out_dir / "stats.csv").write_text(
        "min,q1,median,q3,max,rms\n"
        + ",".join(repr(stats[k]) for k in ("min", "q1", "median", "q3", "max", "rms"))
        + "\n"
    )

    manifest = {
        "fedheat_version": __version__,
        "scenario": scenario.name,
        "mesh": {
            "nodes": mesh.n_nodes,
            "elements": mesh.n_elements,
            "source": str(scenario.mesh_path) if scenario.mesh_path else scenario.mesh_generator,
        },
        "steps": result.n_steps,
        "dt_s": result.dt,
        "dt_critical_s": result.dt_critical,
        "simulated_time_s": result.state.time,
        "td_mode": result.td_mode,
        "workers": result.workers,
        "timings_s": result.timings,
        "final_field_sha256": hashlib.sha256(
            np.ascontiguousarray(result.state.temperatures).tobytes()
        ).hexdigest(),
        "final_field_stats": stats,
        "probe_nodes": [int(n) for n in probe_nodes],
        "snapshots": snapshots,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    print(
        f"{scenario.name}: {result.n_steps} steps of {result.dt:.6g} s "
        f"({result.state.time:.6g} s simulated) on {mesh.n_nodes} nodes / "
        f"{mesh.n_elements} elements, {result.workers} worker(s)"
    )
    print(
        f"critical step {result.dt_critical:.6g} s; "
        f"stepping {result.timings['stepping_s']:.3f} s "
        f"({result.timings['per_step_s'] * 1e3:.3f} ms/step)"
    )
    print("final field [deg C]:")
    print(_format_stats(stats))
    print(f"outputs in {out_dir}")
    return 0


def _cmd_check_dt(args) -> int:
    scenario = resolve_scenario(args.config)
    mesh = scenario.build_mesh()
    engine = ExplicitEngine(
        mesh, scenario.material, scenario.boundary, td_mode=scenario.td_mode
    )
    state = engine.initial_state(scenario.initial_temperature)
    dt_cr = engine.critical_dt(state.temperatures)
    print(f"critical step estimate: {dt_cr:.9g} s")

    dt = args.dt if args.dt is not None else scenario.dt
    if dt is None and scenario.auto_dt_safety is not None:
        dt = scenario.auto_dt_safety * dt_cr
        print(f"auto step ({scenario.auto_dt_safety} x critical): {dt:.9g} s")
    if dt is None:
        return 0
    ratio = dt / dt_cr
    print(f"configured step: {dt:.9g} s ({ratio:.3f} x critical)")
    if dt > dt_cr:
        print("UNSTABLE: the configured step exceeds the critical estimate")
        return 2
    print("stable")
    return 0


def _cmd_bench(args) -> int:
    scenario = resolve_scenario(args.config)
    workers = None
    if args.workers:
        try:
            workers = [int(w) for w in args.workers.split(",")]
        except ValueError:
            raise ConfigError(f"--workers must be a comma list of integers, got {args.workers!r}")

    out_dir = Path(args.output) if args.output else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    if args.sweep:
        divisions = None
        if args.divisions:
            try:
                divisions = [int(d) for d in args.divisions.split(",")]
            except ValueError:
                raise ConfigError(
                    f"--divisions must be a comma list of integers, got {args.divisions!r}"
                )
        result = bench_scaling(
            scenario, divisions=divisions, reps=args.reps, steps=args.steps
        )
        print(format_scaling_table(result))
        if out_dir:
            rows = ["divisions,nodes,elements,per_step_s"]
            rows += [
                f"{d},{n},{e},{t!r}"
                for d, n, e, t in zip(
                    result.divisions, result.n_nodes, result.n_elements, result.per_step_s
                )
            ]
            rows.append(f"# fit slope={result.slope_s_per_node!r} "
                        f"intercept={result.intercept_s!r} r2={result.r_squared!r}")
            (out_dir / "bench_sweep.csv").write_text("\n".join(rows) + "\n")
        return 0

    result = bench_workers(scenario, workers=workers, reps=args.reps, steps=args.steps)
    print(format_worker_table(result))
    if out_dir:
        rows = ["workers,per_step_s"]
        rows += [f"{w},{t!r}" for w, t in zip(result.workers, result.per_step_s)]
        (out_dir / "bench_workers.csv").write_text("\n".join(rows) + "\n")
    if not result.deterministic:
        log.error("final fields differed across worker counts")
        return 1
    return 0


def _cmd_gen_mesh(args) -> int:
    mesh = generate_cube_mesh(args.kind, args.n, args.size)
    serialize_mesh(mesh, args.output)
    print(
        f"wrote {args.output}: {mesh.n_nodes} nodes, {mesh.n_elements} "
        f"{'tet' if args.kind == 'tet' else 'hex'} elements, "
        f"sets {', '.join(sorted(mesh.node_sets))}"
    )
    return 0


def _cmd_compare_oracle(args) -> int:
    scenario = resolve_scenario(args.config)
    mesh = scenario.build_mesh()
    steps = args.steps if args.steps is not None else scenario.steps

    engine = ExplicitEngine(
        mesh,
        scenario.material,
        scenario.boundary,
        td_mode=scenario.td_mode,
        runaway_limit=scenario.runaway_limit,
        dt_recheck_interval=scenario.dt_recheck_interval,
    )
    run = engine.run(
        scenario.initial_temperature,
        steps=steps,
        dt=scenario.dt,
        auto_dt_safety=scenario.auto_dt_safety,
        workers=_resolve_workers(args.workers, scenario),
    )
    reference = oracle.run_reference(
        mesh,
        scenario.material,
        scenario.boundary,
        initial_temperature=scenario.initial_temperature,
        dt=run.dt,
        steps=steps,
        td_mode=scenario.td_mode,
    )
    error = oracle.relative_error(
        reference.state.temperatures, run.state.temperatures
    )

    print(f"{scenario.name}: {steps} steps of {run.dt:.6g} s on {mesh.n_nodes} nodes")
    print("explicit final field [deg C]:")
    print(_format_stats(oracle.stats_summary(run.state.temperatures)))
    print("implicit reference final field [deg C]:")
    print(_format_stats(oracle.stats_summary(reference.state.temperatures)))
    print(f"relative field deviation: {error:.6e} (tolerance {args.tol:.6e})")
    if error > args.tol:
        print("MISMATCH: deviation exceeds tolerance")
        return 3
    print("match")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedheat",
        description="Explicit finite-element tissue heat solver",
    )
    parser.add_argument("--version", action="version", version=f"fedheat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its outputs")
    run.add_argument("config", help="scenario TOML path or bundled name")
    run.add_argument("--workers", type=int, default=None, help="worker threads")
    run.add_argument("--steps", type=int, default=None, help="override step count")
    run.add_argument("--output", default=None, help="override output directory")
    run.set_defaults(func=_cmd_run)

    check = sub.add_parser("check-dt", help="report the critical explicit step")
    check.add_argument("config", help="scenario TOML path or bundled name")
    check.add_argument("--dt", type=float, default=None, help="step to check instead of the configured one")
    check.set_defaults(func=_cmd_check_dt)

    bench = sub.add_parser("bench", help="benchmark stepping performance")
    bench.add_argument("config", help="scenario TOML path or bundled name")
    bench.add_argument("--workers", default=None, help="comma list of worker counts")
    bench.add_argument("--reps", type=int, default=None, help="repetitions per configuration")
    bench.add_argument("--steps", type=int, default=None, help="steps per timed run")
    bench.add_argument("--sweep", action="store_true", help="sweep mesh sizes instead of workers")
    bench.add_argument("--divisions", default=None, help="comma list of cube divisions for --sweep")
    bench.add_argument("--output", default=None, help="directory for CSV results")
    bench.set_defaults(func=_cmd_bench)

    gen = sub.add_parser("gen-mesh", help="write a structured cube mesh")
    gen.add_argument("--kind", choices=("tet", "hex"), required=True)
    gen.add_argument("--n", type=int, required=True, help="cells per axis")
    gen.add_argument("--size", type=float, required=True, help="cube edge length in metres")
    gen.add_argument("-o", "--output", required=True, help="mesh file to write")
    gen.set_defaults(func=_cmd_gen_mesh)

    cmp_parser = sub.add_parser(
        "compare-oracle", help="cross-check a scenario against the implicit reference"
    )
    cmp_parser.add_argument("config", help="scenario TOML path or bundled name")
    cmp_parser.add_argument("--tol", type=float, default=5.0e-4, help="relative deviation tolerance")
    cmp_parser.add_argument("--steps", type=int, default=None, help="override step count")
    cmp_parser.add_argument("--workers", type=int, default=None)
    cmp_parser.set_defaults(func=_cmd_compare_oracle)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InstabilityError as err:
        log.error("run went unstable: %s", err)
        return 2
    except FedheatError as err:
        log.error("%s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
