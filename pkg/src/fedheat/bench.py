"""Benchmark harness: worker sweeps, mode comparison and mesh-size scaling.

All timings are per-step wall-clock seconds of the stepping loop only
(mesh packing and property precomputation excluded), the median over a
configurable number of repetitions.  Every timed configuration also
returns its final field so the harness can assert bitwise determinism
across worker counts as part of the run.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ConfigError
from .scenario import Scenario
from .solver import ExplicitEngine

DEFAULT_BENCH_STEPS = 200
DEFAULT_SWEEP_DIVISIONS = (8, 10, 13, 16, 20)


def _field_digest(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values).tobytes()).hexdigest()


def _timed_run(engine: ExplicitEngine, scenario: Scenario, steps: int, workers: int):
    result = engine.run(
        scenario.initial_temperature,
        steps=steps,
        dt=scenario.dt,
        auto_dt_safety=scenario.auto_dt_safety,
        workers=workers,
    )
    return result.timings["per_step_s"], result.state.temperatures.copy(), result.workers


def _prepare(engine: ExplicitEngine, scenario: Scenario, steps: int) -> None:
    # absorb JIT/cache-load cost before anything is timed
    engine.run(
        scenario.initial_temperature,
        steps=min(steps, 5),
        dt=scenario.dt,
        auto_dt_safety=scenario.auto_dt_safety,
        workers=1,
    )


@dataclass
class WorkerBench:
    workers: list[int]
    per_step_s: list[float]
    reps: int
    steps: int
    n_nodes: int
    n_elements: int
    deterministic: bool
    field_sha256: str
    best_speedup: float


def bench_workers(
    scenario: Scenario,
    *,
    workers: list[int] | None = None,
    reps: int | None = None,
    steps: int | None = None,
) -> WorkerBench:
    """Median per-step time for each worker count, plus a determinism check."""
    counts = list(workers) if workers else list(scenario.bench_workers)
    if not counts or any(w < 1 for w in counts):
        raise ConfigError("worker counts must be integers >= 1")
    reps = reps if reps is not None else scenario.bench_reps
    steps = steps if steps is not None else (scenario.bench_steps or DEFAULT_BENCH_STEPS)

    mesh = scenario.build_mesh()
    engine = ExplicitEngine(
        mesh,
        scenario.material,
        scenario.boundary,
        td_mode=scenario.td_mode,
        runaway_limit=scenario.runaway_limit,
        dt_recheck_interval=scenario.dt_recheck_interval,
    )
    _prepare(engine, scenario, steps)

    medians: list[float] = []
    digests: set[str] = set()
    for count in counts:
        times = []
        for _ in range(reps):
            per_step, field, _ = _timed_run(engine, scenario, steps, count)
            times.append(per_step)
            digests.add(_field_digest(field))
        medians.append(float(np.median(times)))

    base = medians[counts.index(min(counts))]
    return WorkerBench(
        workers=counts,
        per_step_s=medians,
        reps=reps,
        steps=steps,
        n_nodes=mesh.n_nodes,
        n_elements=mesh.n_elements,
        deterministic=len(digests) == 1,
        field_sha256=next(iter(digests)),
        best_speedup=base / min(medians),
    )


@dataclass
class ModeBench:
    constant_per_step_s: float
    td_per_step_s: float
    overhead_ratio: float
    steps: int
    reps: int


def bench_modes(
    scenario: Scenario,
    *,
    reps: int | None = None,
    steps: int | None = None,
    workers: int | None = None,
) -> ModeBench:
    """Per-step cost of constant-property vs temperature-dependent stepping."""
    reps = reps if reps is not None else scenario.bench_reps
    steps = steps if steps is not None else (scenario.bench_steps or DEFAULT_BENCH_STEPS)
    count = workers or kernels.default_workers()

    mesh = scenario.build_mesh()
    results = {}
    for mode in (False, True):
        engine = ExplicitEngine(
            mesh,
            scenario.material,
            scenario.boundary,
            td_mode=mode,
            runaway_limit=scenario.runaway_limit,
            dt_recheck_interval=scenario.dt_recheck_interval,
        )
        _prepare(engine, scenario, steps)
        times = [
            _timed_run(engine, scenario, steps, count)[0] for _ in range(reps)
        ]
        results[mode] = float(np.median(times))
    return ModeBench(
        constant_per_step_s=results[False],
        td_per_step_s=results[True],
        overhead_ratio=results[True] / results[False],
        steps=steps,
        reps=reps,
    )


@dataclass
class ScalingBench:
    divisions: list[int]
    n_nodes: list[int]
    n_elements: list[int]
    per_step_s: list[float]
    slope_s_per_node: float
    intercept_s: float
    r_squared: float
    steps: int
    reps: int


def bench_scaling(
    scenario: Scenario,
    *,
    divisions: list[int] | None = None,
    reps: int | None = None,
    steps: int | None = None,
    workers: int | None = None,
) -> ScalingBench:
    """Per-step time across mesh sizes, with a linear fit in node count.

    Only available for generated meshes: the sweep rebuilds the cube at
    several division counts.
    """
    if scenario.mesh_generator is None:
        raise ConfigError("the size sweep needs a [mesh.generator] scenario, not a mesh file")
    sizes = list(divisions) if divisions else list(DEFAULT_SWEEP_DIVISIONS)
    if len(sizes) < 2 or any(d < 1 for d in sizes):
        raise ConfigError("need at least two division counts, all >= 1")
    reps = reps if reps is not None else scenario.bench_reps
    steps = steps if steps is not None else (scenario.bench_steps or DEFAULT_BENCH_STEPS)
    count = workers or kernels.default_workers()

    nodes, elements, medians = [], [], []
    for div in sizes:
        sub = replace(
            scenario,
            mesh_generator={**scenario.mesh_generator, "divisions": int(div)},
        )
        mesh = sub.build_mesh()
        engine = ExplicitEngine(
            mesh,
            sub.material,
            sub.boundary,
            td_mode=sub.td_mode,
            runaway_limit=sub.runaway_limit,
            dt_recheck_interval=sub.dt_recheck_interval,
        )
        _prepare(engine, sub, steps)
        times = [_timed_run(engine, sub, steps, count)[0] for _ in range(reps)]
        nodes.append(mesh.n_nodes)
        elements.append(mesh.n_elements)
        medians.append(float(np.median(times)))

    x = np.asarray(nodes, dtype=np.float64)
    y = np.asarray(medians, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    return ScalingBench(
        divisions=[int(d) for d in sizes],
        n_nodes=nodes,
        n_elements=elements,
        per_step_s=medians,
        slope_s_per_node=float(slope),
        intercept_s=float(intercept),
        r_squared=r_squared,
        steps=steps,
        reps=reps,
    )


def format_worker_table(result: WorkerBench) -> str:
    lines = [
        f"mesh: {result.n_nodes} nodes, {result.n_elements} elements; "
        f"{result.steps} steps x {result.reps} reps (median)",
        f"{'workers':>8}  {'per-step [ms]':>14}  {'speedup':>8}",
    ]
    base = result.per_step_s[result.workers.index(min(result.workers))]
    for count, per_step in zip(result.workers, result.per_step_s):
        lines.append(f"{count:>8}  {per_step * 1e3:>14.4f}  {base / per_step:>8.3f}")
    lines.append(
        f"deterministic across worker counts: {'yes' if result.deterministic else 'NO'} "
        f"(field sha256 {result.field_sha256[:16]}...)"
    )
    return "\n".join(lines)


def format_scaling_table(result: ScalingBench) -> str:
    lines = [
        f"size sweep: {result.steps} steps x {result.reps} reps (median)",
        f"{'divisions':>10}  {'nodes':>8}  {'elements':>9}  {'per-step [ms]':>14}",
    ]
    for div, n, e, t in zip(
        result.divisions, result.n_nodes, result.n_elements, result.per_step_s
    ):
        lines.append(f"{div:>10}  {n:>8}  {e:>9}  {t * 1e3:>14.4f}")
    lines.append(
        f"linear fit: per-step = {result.slope_s_per_node:.3e} s/node * N "
        f"+ {result.intercept_s:.3e} s (R^2 = {result.r_squared:.4f})"
    )
    return "\n".join(lines)
