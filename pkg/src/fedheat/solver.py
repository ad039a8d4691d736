"""Explicit time stepping for the tissue heat equation, matrix-free.

Per step, with diagonal heat capacity C and per-node source terms::

    T_i <- T_i + dt/C_i * ( F_i - kb_i*T_i + qb_i + qm_i + qr_i )

where ``F`` is the net conduction inflow gathered element by element
(``-kbar_e * A_e @ T_local`` scattered to the element's nodes), ``kb``/``qb``
the perfusion conductance and arterial heat, ``qm`` the metabolic heat and
``qr`` any active concentrated nodal loads.  Dirichlet nodes are
overwritten with their prescribed values after every update.

Two property modes:

* constant mode: conductivity, density and specific heat are evaluated
  once from the initial field and reused;
* temperature-dependent mode: nodal conductivity, its per-element mean and
  the nodal capacity are re-evaluated from the current field every step,
  and the critical step estimate is refreshed periodically.

The explicit update is conditionally stable.  ``critical_dt`` returns
``2 / lambda_hat`` where ``lambda_hat`` is a Gershgorin row-sum bound on
the largest eigenvalue of ``C^-1 (K + Kb)``; the bound never underestimates
the true eigenvalue, so the returned step is always safe (if conservative).

Results are bitwise-reproducible for any worker count; see `fedheat.kernels`
for the chunked-scatter contract that guarantees it.
"""

from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .element import ElemKind, ElementPrecomp, batch_precompute
from .errors import ConfigError, InstabilityError
from .material import TissueMaterial, eval_property
from .mesh import Mesh
from .precompute import build_lumped, lumped_mass

log = logging.getLogger(__name__)

CHUNK_SIZE = 4096  # elements per scatter chunk; fixed so results never depend on workers
DEFAULT_RUNAWAY_LIMIT = 1.0e6  # deg C magnitude treated as blow-up
DEFAULT_DT_RECHECK = 100  # steps between critical-dt re-estimates in TD mode


class PackedElements:
    """Flat element arrays for the kernels (mixed tet/hex, tets first).

    ``conn_data``/``conn_offs`` hold node ids per element, ``mat_data``/
    ``mat_offs`` the row-major A matrices, and ``row_abs`` (aligned with
    ``conn_data``) the per-row absolute sums of A used by the stability
    bound.  ``buffers`` is the per-chunk scatter scratch.
    """

    def __init__(self, mesh: Mesh):
        counts = []
        conn_parts = []
        mat_parts = []
        rowabs_parts = []
        vol_parts = []
        for kind, conn in ((ElemKind.TET4, mesh.tets), (ElemKind.HEX8, mesh.hexes)):
            if conn.shape[0] == 0:
                continue
            a, vol = batch_precompute(kind, mesh.nodes[conn])
            counts.append(np.full(conn.shape[0], kind.n_nodes, dtype=np.int64))
            conn_parts.append(conn.ravel())
            mat_parts.append(a.reshape(conn.shape[0], -1).ravel())
            rowabs_parts.append(np.abs(a).sum(axis=2).ravel())
            vol_parts.append(vol)
        counts = np.concatenate(counts)
        self.n_nodes = mesh.n_nodes
        self.n_elements = int(counts.shape[0])
        self.node_counts = counts
        self.conn_offs = np.concatenate(([0], np.cumsum(counts)))
        self.conn_data = np.concatenate(conn_parts)
        self.mat_offs = np.concatenate(([0], np.cumsum(counts * counts)))
        self.mat_data = np.concatenate(mat_parts)
        self.row_abs = np.concatenate(rowabs_parts)
        self.volumes = np.concatenate(vol_parts)
        self.n_chunks = -(-self.n_elements // CHUNK_SIZE)
        self.buffers = np.zeros((self.n_chunks, self.n_nodes))


@dataclass(frozen=True)
class BoundarySpec:
    """Named-set boundary conditions.

    ``dirichlet``: (set name, temperature) pairs, applied after every step.
    ``heat_loads``: (set name, watts per node, t_start, t_end); a load is
    active while ``t_start <= t < t_end``.  Nodes not covered by either are
    adiabatic.
    """

    dirichlet: tuple[tuple[str, float], ...] = ()
    heat_loads: tuple[tuple[str, float, float, float], ...] = ()


@dataclass(frozen=True)
class ResolvedBoundary:
    dirichlet_nodes: np.ndarray
    dirichlet_values: np.ndarray
    loads: tuple[tuple[np.ndarray, float, float, float], ...]

    def apply_dirichlet(self, temperatures: np.ndarray) -> np.ndarray:
        """Return a copy of ``temperatures`` with the fixed values written in."""
        out = np.array(temperatures, dtype=np.float64)
        out[self.dirichlet_nodes] = self.dirichlet_values
        return out


def resolve_boundary(boundary: BoundarySpec, mesh: Mesh) -> ResolvedBoundary:
    def nodes_of(name: str) -> np.ndarray:
        try:
            return mesh.node_sets[name]
        except KeyError:
            known = ", ".join(sorted(mesh.node_sets)) or "<none>"
            raise ConfigError(
                f"mesh has no node set {name!r} (available: {known})"
            ) from None

    seen: dict[int, float] = {}
    dir_nodes: list[int] = []
    dir_vals: list[float] = []
    for name, value in boundary.dirichlet:
        value = float(value)
        if not np.isfinite(value):
            raise ConfigError(f"non-finite Dirichlet value on set {name!r}")
        for node in nodes_of(name):
            node = int(node)
            if node in seen:
                if seen[node] != value:
                    raise ConfigError(
                        f"node {node} has conflicting Dirichlet values "
                        f"({seen[node]} and {value})"
                    )
                continue
            seen[node] = value
            dir_nodes.append(node)
            dir_vals.append(value)

    loads = []
    for name, power, t_start, t_end in boundary.heat_loads:
        power, t_start, t_end = float(power), float(t_start), float(t_end)
        if not (np.isfinite(power) and np.isfinite(t_start) and np.isfinite(t_end)):
            raise ConfigError(f"non-finite heat-load parameters on set {name!r}")
        if t_end <= t_start:
            raise ConfigError(
                f"heat load on set {name!r} has empty window [{t_start}, {t_end})"
            )
        loads.append((nodes_of(name), power, t_start, t_end))

    order = np.argsort(np.asarray(dir_nodes, dtype=np.int64), kind="stable")
    return ResolvedBoundary(
        dirichlet_nodes=np.asarray(dir_nodes, dtype=np.int64)[order],
        dirichlet_values=np.asarray(dir_vals, dtype=np.float64)[order],
        loads=tuple(loads),
    )


@dataclass
class SimState:
    temperatures: np.ndarray
    time: float = 0.0
    step_index: int = 0
    inflow: np.ndarray = field(init=False)

    def __post_init__(self):
        self.temperatures = np.ascontiguousarray(self.temperatures, dtype=np.float64)
        self.inflow = np.zeros_like(self.temperatures)


@dataclass
class RunResult:
    state: SimState
    dt: float
    n_steps: int
    dt_critical: float
    td_mode: bool
    workers: int
    probe_nodes: np.ndarray
    probe_times: np.ndarray
    probe_values: np.ndarray
    timings: dict[str, float]


def element_conductivity(material: TissueMaterial, temperatures, node_ids) -> float:
    """Mean nodal conductivity of one element (sequential sum, matching the kernel)."""
    total = 0.0
    count = 0
    for nid in node_ids:
        total += eval_property(material.conductivity, float(temperatures[nid]))
        count += 1
    return total / count


def element_loads(precomp: ElementPrecomp, kbar: float, t_local) -> np.ndarray:
    """Conduction load kbar * A @ T_local for one element (outflow-positive).

    Evaluated against the node-0-shifted temperatures, which is exact
    because every row of A sums to zero; a uniform T_local gives exact
    zeros.  The scatter kernel accumulates the negation of these numbers
    with identical arithmetic.
    """
    a = precomp.unit_conductance
    n = a.shape[0]
    t0 = float(t_local[0])
    out = np.empty(n)
    for r in range(n):
        acc = 0.0
        for b in range(n):
            acc += a[r, b] * (float(t_local[b]) - t0)
        out[r] = kbar * acc
    return out


def scatter_loads(packed: PackedElements, kbar: np.ndarray, temperatures: np.ndarray,
                  out: np.ndarray | None = None) -> np.ndarray:
    """Net conduction inflow per node, deterministic for any worker count."""
    if out is None:
        out = np.empty(packed.n_nodes)
    kernels.scatter_net_loads(
        packed.conn_data,
        packed.conn_offs,
        packed.mat_data,
        packed.mat_offs,
        kbar,
        temperatures,
        packed.n_chunks,
        CHUNK_SIZE,
        packed.buffers,
        out,
    )
    return out


class ExplicitEngine:
    """Owns the packed mesh, lumped data and scratch arrays for one model."""

    def __init__(
        self,
        mesh: Mesh,
        material: TissueMaterial,
        boundary: BoundarySpec | None = None,
        *,
        td_mode: bool | None = None,
        runaway_limit: float = DEFAULT_RUNAWAY_LIMIT,
        dt_recheck_interval: int = DEFAULT_DT_RECHECK,
    ):
        t0 = _time.perf_counter()
        self.mesh = mesh
        self.material = material
        self.packed = PackedElements(mesh)
        self.lumped = build_lumped(mesh, material)
        self.boundary = resolve_boundary(boundary or BoundarySpec(), mesh)
        self.td_mode = (not material.is_constant) if td_mode is None else bool(td_mode)
        self.runaway_limit = float(runaway_limit)
        self.dt_recheck_interval = int(dt_recheck_interval)
        if self.dt_recheck_interval < 1:
            raise ConfigError("dt_recheck_interval must be >= 1")

        n = mesh.n_nodes
        self._knodal = np.empty(n)
        self._capacity = np.empty(n)
        self._kbar = np.empty(self.packed.n_elements)
        self._zero_q = np.zeros(n)
        self._qr = np.zeros(n)
        self._qr_signature: tuple[bool, ...] | None = None
        self._frozen = False
        self.precompute_seconds = _time.perf_counter() - t0

    # -- property fields -------------------------------------------------

    def _refresh_properties(self, temperatures: np.ndarray) -> None:
        mat = self.material
        kernels.eval_curve_nodes(
            mat.conductivity.temperatures, mat.conductivity.values, temperatures, self._knodal
        )
        kernels.element_mean_nodal(
            self.packed.conn_data, self.packed.conn_offs, self._knodal, self._kbar
        )
        kernels.lumped_capacity_nodes(
            mat.density.temperatures,
            mat.density.values,
            mat.specific_heat.temperatures,
            mat.specific_heat.values,
            temperatures,
            self.lumped.node_volumes,
            self._capacity,
        )

    def _ensure_properties(self, state: SimState) -> None:
        if self.td_mode:
            self._refresh_properties(state.temperatures)
        elif not self._frozen:
            self._refresh_properties(state.temperatures)
            self._frozen = True

    # -- loads -----------------------------------------------------------

    def _qr_for(self, time: float) -> np.ndarray:
        loads = self.boundary.loads
        if not loads:
            return self._zero_q
        signature = tuple(t0 <= time < t1 for _, _, t0, t1 in loads)
        if signature != self._qr_signature:
            self._qr[:] = 0.0
            for active, (nodes, power, _, _) in zip(signature, loads):
                if active:
                    self._qr[nodes] += power
            self._qr_signature = signature
        return self._qr

    # -- stepping ----------------------------------------------------------

    def initial_state(self, initial_temperature) -> SimState:
        t0 = np.asarray(initial_temperature, dtype=np.float64)
        if t0.ndim == 0:
            t0 = np.full(self.packed.n_nodes, float(t0))
        if t0.shape != (self.packed.n_nodes,):
            raise ConfigError(
                f"initial field has shape {t0.shape}, expected ({self.packed.n_nodes},)"
            )
        if not np.all(np.isfinite(t0)):
            raise ConfigError("initial field contains non-finite temperatures")
        state = SimState(temperatures=t0.copy())
        bnd = self.boundary
        state.temperatures[bnd.dirichlet_nodes] = bnd.dirichlet_values
        capacity = lumped_mass(self.material, self.lumped.node_volumes, state.temperatures)
        free = np.ones(self.packed.n_nodes, dtype=bool)
        free[bnd.dirichlet_nodes] = False
        if np.any(capacity[free] <= 0.0):
            bad = int(np.argmax(free & (capacity <= 0.0)))
            raise ConfigError(
                f"node {bad} has zero heat capacity (outside every element?) "
                "but is not Dirichlet-constrained"
            )
        self._frozen = False
        self._qr_signature = None
        return state

    def step(self, state: SimState, dt: float) -> None:
        """Advance one explicit step in place, then re-impose Dirichlet values."""
        self._ensure_properties(state)
        temps = state.temperatures
        scatter_loads(self.packed, self._kbar, temps, out=state.inflow)
        qr = self._qr_for(state.time)
        kernels.nodal_update(
            temps,
            state.inflow,
            self._capacity,
            self.lumped.perfusion_conductance,
            self.lumped.perfusion_heat,
            self.lumped.metabolic_heat,
            qr,
            dt,
        )
        bnd = self.boundary
        temps[bnd.dirichlet_nodes] = bnd.dirichlet_values
        state.step_index += 1
        state.time = state.step_index * dt

        peak = float(np.max(np.abs(temps)))
        if not math.isfinite(peak) or peak > self.runaway_limit:
            finite = np.isfinite(temps)
            node = (
                int(np.argmax(~finite)) if not finite.all() else int(np.argmax(np.abs(temps)))
            )
            raise InstabilityError(
                f"temperature at node {node} is "
                f"{'non-finite' if not finite.all() else f'{temps[node]:.3g} C'}; "
                f"the step size likely exceeds the stable limit",
                step=state.step_index,
                time=state.time,
                node=node,
            )

    def critical_dt(self, temperatures) -> float:
        """Safe step bound 2 / lambda_hat from Gershgorin row sums (never optimistic)."""
        temps = np.asarray(temperatures, dtype=np.float64)
        if temps.ndim == 0:
            temps = np.full(self.packed.n_nodes, float(temps))
        mat = self.material
        knodal = eval_property(mat.conductivity, temps)
        segment_sums = np.add.reduceat(knodal[self.packed.conn_data], self.packed.conn_offs[:-1])
        kbar = segment_sums / self.packed.node_counts
        row = np.zeros(self.packed.n_nodes)
        np.add.at(
            row,
            self.packed.conn_data,
            np.repeat(kbar, self.packed.node_counts) * self.packed.row_abs,
        )
        row += self.lumped.perfusion_conductance
        capacity = lumped_mass(mat, self.lumped.node_volumes, temps)
        mask = capacity > 0.0
        if not mask.any():
            raise ConfigError("every node has zero heat capacity")
        lam = float(np.max(row[mask] / capacity[mask]))
        return math.inf if lam <= 0.0 else 2.0 / lam

    def run(
        self,
        initial_temperature,
        *,
        steps: int,
        dt: float | None = None,
        auto_dt_safety: float | None = None,
        workers: int | None = None,
        probes=None,
        probe_interval: int = 1,
        snapshot_interval: int = 0,
        on_snapshot=None,
    ) -> RunResult:
        if steps < 1:
            raise ConfigError(f"steps must be >= 1, got {steps}")
        if (dt is None) == (auto_dt_safety is None):
            raise ConfigError("give exactly one of dt or auto_dt_safety")
        if probe_interval < 1 or snapshot_interval < 0:
            raise ConfigError("probe_interval must be >= 1 and snapshot_interval >= 0")

        applied_workers = kernels.set_workers(
            workers if workers else kernels.default_workers()
        )

        state = self.initial_state(initial_temperature)
        dt_cr = self.critical_dt(state.temperatures)
        if auto_dt_safety is not None:
            if not (0.0 < auto_dt_safety <= 1.0):
                raise ConfigError(f"auto_dt_safety must be in (0, 1], got {auto_dt_safety}")
            if not math.isfinite(dt_cr):
                raise ConfigError("cannot auto-pick dt: the critical step is unbounded")
            dt = auto_dt_safety * dt_cr
        dt = float(dt)
        if not (dt > 0.0 and math.isfinite(dt)):
            raise ConfigError(f"dt must be positive and finite, got {dt}")
        if dt > dt_cr:
            log.warning(
                "dt = %.6g s exceeds the estimated critical step %.6g s; "
                "the run may go unstable",
                dt,
                dt_cr,
            )

        probe_nodes = np.asarray([] if probes is None else probes, dtype=np.int64)
        if probe_nodes.size and (
            probe_nodes.min() < 0 or probe_nodes.max() >= self.packed.n_nodes
        ):
            raise ConfigError("probe node index out of range")
        probe_times: list[float] = []
        probe_rows: list[np.ndarray] = []

        def record(st: SimState) -> None:
            probe_times.append(st.time)
            probe_rows.append(st.temperatures[probe_nodes].copy())

        record(state)
        if on_snapshot is not None and snapshot_interval > 0:
            on_snapshot(state)

        dt_exceeds = dt > dt_cr
        t_begin = _time.perf_counter()
        for _ in range(steps):
            step_no = state.step_index
            if (
                self.td_mode
                and step_no > 0
                and step_no % self.dt_recheck_interval == 0
            ):
                dt_cr_now = self.critical_dt(state.temperatures)
                if dt > dt_cr_now and not dt_exceeds:
                    log.warning(
                        "dt = %.6g s has crossed above the critical step "
                        "(now %.6g s) at step %d",
                        dt,
                        dt_cr_now,
                        step_no,
                    )
                dt_exceeds = dt > dt_cr_now
            self.step(state, dt)
            if state.step_index % probe_interval == 0:
                record(state)
            if (
                on_snapshot is not None
                and snapshot_interval > 0
                and state.step_index % snapshot_interval == 0
            ):
                on_snapshot(state)
        stepping = _time.perf_counter() - t_begin
        if on_snapshot is not None and (
            snapshot_interval == 0 or state.step_index % snapshot_interval != 0
        ):
            on_snapshot(state)

        return RunResult(
            state=state,
            dt=dt,
            n_steps=steps,
            dt_critical=dt_cr,
            td_mode=self.td_mode,
            workers=applied_workers,
            probe_nodes=probe_nodes,
            probe_times=np.asarray(probe_times),
            probe_values=(
                np.asarray(probe_rows)
                if probe_rows
                else np.empty((0, probe_nodes.size))
            ),
            timings={
                "precompute_s": self.precompute_seconds,
                "stepping_s": stepping,
                "per_step_s": stepping / steps,
            },
        )


def run_simulation(
    mesh: Mesh,
    material: TissueMaterial,
    boundary: BoundarySpec | None = None,
    *,
    initial_temperature,
    steps: int,
    dt: float | None = None,
    auto_dt_safety: float | None = None,
    td_mode: bool | None = None,
    workers: int | None = None,
    probes=None,
    probe_interval: int = 1,
    snapshot_interval: int = 0,
    on_snapshot=None,
    runaway_limit: float = DEFAULT_RUNAWAY_LIMIT,
    dt_recheck_interval: int = DEFAULT_DT_RECHECK,
) -> RunResult:
    """One-shot convenience wrapper: build an engine and run it."""
    engine = ExplicitEngine(
        mesh,
        material,
        boundary,
        td_mode=td_mode,
        runaway_limit=runaway_limit,
        dt_recheck_interval=dt_recheck_interval,
    )
    return engine.run(
        initial_temperature,
        steps=steps,
        dt=dt,
        auto_dt_safety=auto_dt_safety,
        workers=workers,
        probes=probes,
        probe_interval=probe_interval,
        snapshot_interval=snapshot_interval,
        on_snapshot=on_snapshot,
    )


def critical_dt(mesh: Mesh, material: TissueMaterial, temperatures) -> float:
    """Module-level convenience around ExplicitEngine.critical_dt."""
    return ExplicitEngine(mesh, material).critical_dt(temperatures)
