"""Scenario configuration: one TOML file describes a complete run.

Sections::

    [mesh]                      # exactly one of `path` or `[mesh.generator]`
    path = "slab.mesh"          # resolved relative to the config file
    [mesh.generator]
    kind = "tet"                # tet | hex
    divisions = 10
    size = 0.1                  # cube edge, metres

    [material]                  # scalar = constant, [[T, value], ...] = curve
    density = 1060.0            # kg/m^3
    specific_heat = 3700.0      # J/(kg K)
    conductivity = 0.518        # W/(m K)
    perfusion_rate = 0.0        # kg/(m^3 s), optional
    blood_specific_heat = 3617.0
    arterial_temperature = 37.0
    metabolic_rate = 0.0        # W/m^3, optional

    [simulation]
    initial_temperature = 37.0
    steps = 2000
    dt = 0.005                  # or: auto_dt_safety = 0.5 (fraction of critical)
    td_mode = true              # optional; omitted = auto from the material
    workers = 4                 # optional
    dt_recheck_interval = 100   # optional, temperature-dependent runs
    runaway_limit = 1e6         # optional, deg C

    [[dirichlet]]
    nodeset = "z0"
    temperature = 37.0

    [[heat_load]]               # power in W applied at EACH node of the set,
    nodeset = "center"          # active while t_start <= t < t_end
    power = 2.0
    t_start = 0.0
    t_end = 10.0

    [output]
    directory = "out/conduction"   # resolved relative to the working directory
    probes = ["center", 42]        # node-set names and/or raw node indices
    probe_interval = 20            # steps between probe rows
    snapshot_interval = 0          # steps between VTK snapshots; 0 = final only

    [bench]                     # optional; defaults used by `fedheat bench`
    workers = [1, 2, 4, 8]
    reps = 3
    steps = 200

Unknown keys anywhere are rejected, so typos fail loudly instead of being
silently ignored.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .material import PropertyCurve, TissueMaterial, make_constant
from .mesh import Mesh, parse_mesh
from .meshgen import generate_cube_mesh
from .solver import BoundarySpec


def _check_keys(table: dict, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required key {key!r} in [{where}]")
    return table[key]


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    out = float(value)
    if not np.isfinite(out):
        raise ConfigError(f"{where} must be finite, got {value!r}")
    return out


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


def _as_curve(value, where: str) -> PropertyCurve:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return make_constant(float(value))
    if isinstance(value, list):
        try:
            pairs = np.asarray(value, dtype=np.float64)
        except (TypeError, ValueError):
            raise ConfigError(f"{where} curve must be [[T, value], ...]") from None
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
            raise ConfigError(f"{where} curve must be [[T, value], ...], got shape {pairs.shape}")
        return PropertyCurve(pairs[:, 0], pairs[:, 1])
    raise ConfigError(f"{where} must be a number or a [[T, value], ...] curve")


@dataclass(frozen=True)
class Scenario:
    name: str
    base_dir: Path
    mesh_path: Path | None
    mesh_generator: dict | None
    material: TissueMaterial
    boundary: BoundarySpec
    initial_temperature: float
    steps: int
    dt: float | None
    auto_dt_safety: float | None
    td_mode: bool | None
    workers: int | None
    dt_recheck_interval: int
    runaway_limit: float
    output_dir: str
    probes: tuple = ()
    probe_interval: int = 1
    snapshot_interval: int = 0
    bench_workers: tuple[int, ...] = (1, 2, 4, 8)
    bench_reps: int = 3
    bench_steps: int | None = None

    def build_mesh(self) -> Mesh:
        if self.mesh_path is not None:
            return parse_mesh(self.mesh_path)
        gen = self.mesh_generator
        return generate_cube_mesh(gen["kind"], gen["divisions"], gen["size"])

    def probe_nodes(self, mesh: Mesh) -> np.ndarray:
        """Expand probe entries (set names or raw indices) to unique node ids."""
        out: list[int] = []
        seen: set[int] = set()
        for entry in self.probes:
            if isinstance(entry, str):
                if entry not in mesh.node_sets:
                    raise ConfigError(f"probe references unknown node set {entry!r}")
                candidates = [int(i) for i in mesh.node_sets[entry]]
            else:
                candidates = [int(entry)]
            for node in candidates:
                if not 0 <= node < mesh.n_nodes:
                    raise ConfigError(f"probe node {node} outside [0, {mesh.n_nodes})")
                if node not in seen:
                    seen.add(node)
                    out.append(node)
        return np.asarray(out, dtype=np.int64)


def _parse_mesh_section(table: dict, base_dir: Path) -> tuple[Path | None, dict | None]:
    _check_keys(table, {"path", "generator"}, "mesh")
    has_path = "path" in table
    has_gen = "generator" in table
    if has_path == has_gen:
        raise ConfigError("[mesh] needs exactly one of 'path' or a [mesh.generator] table")
    if has_path:
        raw = table["path"]
        if not isinstance(raw, str):
            raise ConfigError(f"mesh.path must be a string, got {raw!r}")
        return (base_dir / raw).resolve(), None
    gen = table["generator"]
    if not isinstance(gen, dict):
        raise ConfigError("[mesh.generator] must be a table")
    _check_keys(gen, {"kind", "divisions", "size"}, "mesh.generator")
    kind = _require(gen, "kind", "mesh.generator")
    if kind not in ("tet", "hex"):
        raise ConfigError(f"mesh.generator.kind must be 'tet' or 'hex', got {kind!r}")
    divisions = _as_int(_require(gen, "divisions", "mesh.generator"), "mesh.generator.divisions")
    if divisions < 1:
        raise ConfigError(f"mesh.generator.divisions must be >= 1, got {divisions}")
    size = _as_float(_require(gen, "size", "mesh.generator"), "mesh.generator.size")
    if size <= 0:
        raise ConfigError(f"mesh.generator.size must be > 0, got {size}")
    return None, {"kind": kind, "divisions": divisions, "size": size}


def _parse_material(table: dict) -> TissueMaterial:
    allowed = {
        "density",
        "specific_heat",
        "conductivity",
        "perfusion_rate",
        "blood_specific_heat",
        "arterial_temperature",
        "metabolic_rate",
    }
    _check_keys(table, allowed, "material")
    return TissueMaterial(
        density=_as_curve(_require(table, "density", "material"), "material.density"),
        specific_heat=_as_curve(
            _require(table, "specific_heat", "material"), "material.specific_heat"
        ),
        conductivity=_as_curve(
            _require(table, "conductivity", "material"), "material.conductivity"
        ),
        perfusion_rate=_as_float(table.get("perfusion_rate", 0.0), "material.perfusion_rate"),
        blood_specific_heat=_as_float(
            table.get("blood_specific_heat", 3617.0), "material.blood_specific_heat"
        ),
        arterial_temperature=_as_float(
            table.get("arterial_temperature", 37.0), "material.arterial_temperature"
        ),
        metabolic_rate=_as_float(table.get("metabolic_rate", 0.0), "material.metabolic_rate"),
    )


def _parse_boundary(data: dict) -> BoundarySpec:
    dirichlet = []
    for i, entry in enumerate(data.get("dirichlet", [])):
        where = f"dirichlet[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"[[dirichlet]] entries must be tables")
        _check_keys(entry, {"nodeset", "temperature"}, where)
        name = _require(entry, "nodeset", where)
        if not isinstance(name, str):
            raise ConfigError(f"{where}.nodeset must be a string")
        dirichlet.append((name, _as_float(_require(entry, "temperature", where), f"{where}.temperature")))

    loads = []
    for i, entry in enumerate(data.get("heat_load", [])):
        where = f"heat_load[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"[[heat_load]] entries must be tables")
        _check_keys(entry, {"nodeset", "power", "t_start", "t_end"}, where)
        name = _require(entry, "nodeset", where)
        if not isinstance(name, str):
            raise ConfigError(f"{where}.nodeset must be a string")
        loads.append(
            (
                name,
                _as_float(_require(entry, "power", where), f"{where}.power"),
                _as_float(entry.get("t_start", 0.0), f"{where}.t_start"),
                _as_float(_require(entry, "t_end", where), f"{where}.t_end"),
            )
        )
    return BoundarySpec(dirichlet=tuple(dirichlet), heat_loads=tuple(loads))


def parse_scenario_text(text: str, *, name: str = "<string>", base_dir: Path | None = None) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"invalid TOML: {err}") from None
    base_dir = Path.cwd() if base_dir is None else base_dir

    _check_keys(
        data,
        {"mesh", "material", "simulation", "dirichlet", "heat_load", "output", "bench"},
        "scenario",
    )
    for section in ("mesh", "material", "simulation"):
        if section not in data or not isinstance(data[section], dict):
            raise ConfigError(f"missing required [{section}] section")

    mesh_path, mesh_gen = _parse_mesh_section(data["mesh"], base_dir)
    material = _parse_material(data["material"])
    boundary = _parse_boundary(data)

    sim = data["simulation"]
    _check_keys(
        sim,
        {
            "initial_temperature",
            "steps",
            "dt",
            "auto_dt_safety",
            "td_mode",
            "workers",
            "dt_recheck_interval",
            "runaway_limit",
        },
        "simulation",
    )
    steps = _as_int(_require(sim, "steps", "simulation"), "simulation.steps")
    if steps < 1:
        raise ConfigError(f"simulation.steps must be >= 1, got {steps}")
    dt = _as_float(sim["dt"], "simulation.dt") if "dt" in sim else None
    auto = (
        _as_float(sim["auto_dt_safety"], "simulation.auto_dt_safety")
        if "auto_dt_safety" in sim
        else None
    )
    if (dt is None) == (auto is None):
        raise ConfigError("[simulation] needs exactly one of 'dt' or 'auto_dt_safety'")
    if dt is not None and dt <= 0:
        raise ConfigError(f"simulation.dt must be > 0, got {dt}")
    if auto is not None and not 0 < auto <= 1:
        raise ConfigError(f"simulation.auto_dt_safety must be in (0, 1], got {auto}")
    td_mode = sim.get("td_mode")
    if td_mode is not None and not isinstance(td_mode, bool):
        raise ConfigError(f"simulation.td_mode must be a boolean, got {td_mode!r}")
    workers = _as_int(sim["workers"], "simulation.workers") if "workers" in sim else None
    if workers is not None and workers < 1:
        raise ConfigError(f"simulation.workers must be >= 1, got {workers}")
    recheck = _as_int(sim.get("dt_recheck_interval", 100), "simulation.dt_recheck_interval")
    if recheck < 1:
        raise ConfigError(f"simulation.dt_recheck_interval must be >= 1, got {recheck}")
    runaway = _as_float(sim.get("runaway_limit", 1.0e6), "simulation.runaway_limit")
    if runaway <= 0:
        raise ConfigError(f"simulation.runaway_limit must be > 0, got {runaway}")

    out = data.get("output", {})
    _check_keys(out, {"directory", "probes", "probe_interval", "snapshot_interval"}, "output")
    directory = out.get("directory", "fedheat-out")
    if not isinstance(directory, str):
        raise ConfigError(f"output.directory must be a string, got {directory!r}")
    probes_raw = out.get("probes", [])
    if not isinstance(probes_raw, list):
        raise ConfigError("output.probes must be a list of set names or node indices")
    probes = []
    for entry in probes_raw:
        if isinstance(entry, str):
            probes.append(entry)
        elif isinstance(entry, int) and not isinstance(entry, bool):
            probes.append(entry)
        else:
            raise ConfigError(f"output.probes entries must be strings or integers, got {entry!r}")
    probe_interval = _as_int(out.get("probe_interval", 1), "output.probe_interval")
    if probe_interval < 1:
        raise ConfigError(f"output.probe_interval must be >= 1, got {probe_interval}")
    snapshot_interval = _as_int(out.get("snapshot_interval", 0), "output.snapshot_interval")
    if snapshot_interval < 0:
        raise ConfigError(f"output.snapshot_interval must be >= 0, got {snapshot_interval}")

    bench = data.get("bench", {})
    _check_keys(bench, {"workers", "reps", "steps"}, "bench")
    bench_workers_raw = bench.get("workers", [1, 2, 4, 8])
    if not (
        isinstance(bench_workers_raw, list)
        and bench_workers_raw
        and all(isinstance(w, int) and not isinstance(w, bool) and w >= 1 for w in bench_workers_raw)
    ):
        raise ConfigError("bench.workers must be a non-empty list of integers >= 1")
    bench_reps = _as_int(bench.get("reps", 3), "bench.reps")
    if bench_reps < 1:
        raise ConfigError(f"bench.reps must be >= 1, got {bench_reps}")
    bench_steps = _as_int(bench["steps"], "bench.steps") if "steps" in bench else None
    if bench_steps is not None and bench_steps < 1:
        raise ConfigError(f"bench.steps must be >= 1, got {bench_steps}")

    return Scenario(
        name=name,
        base_dir=base_dir,
        mesh_path=mesh_path,
        mesh_generator=mesh_gen,
        material=material,
        boundary=boundary,
        initial_temperature=_as_float(
            _require(sim, "initial_temperature", "simulation"), "simulation.initial_temperature"
        ),
        steps=steps,
        dt=dt,
        auto_dt_safety=auto,
        td_mode=td_mode,
        workers=workers,
        dt_recheck_interval=recheck,
        runaway_limit=runaway,
        output_dir=directory,
        probes=tuple(probes),
        probe_interval=probe_interval,
        snapshot_interval=snapshot_interval,
        bench_workers=tuple(bench_workers_raw),
        bench_reps=bench_reps,
        bench_steps=bench_steps,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read scenario {path}: {err}") from None
    return parse_scenario_text(text, name=path.stem, base_dir=path.parent.resolve())
