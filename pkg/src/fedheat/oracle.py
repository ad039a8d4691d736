"""Assembled implicit reference solver used to cross-check the explicit engine.

This path deliberately shares as little machinery with the fast solver as
possible: it assembles global sparse operators with scipy, steps them with
backward Euler (unconditionally stable), and solves each step with a plain
conjugate-gradient iteration.  What it does share, by design, is the
element matrix A and the per-element mean conductivity, because those
define the spatial model both sides must agree on.

It is meant for small verification meshes; `assemble` refuses anything
above ``size_cap`` nodes.  A consistent (non-lumped) mass option exists as
a diagnostic for studying the lumping error; the default matches the
engine's lumped capacity.

Temperature-dependent runs reassemble every step at the start-of-step
field (lagged coefficients), so the reference remains a linear solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .element import ElemKind, batch_precompute
from .errors import ConfigError, ConvergenceError, SizeCapError
from .material import TissueMaterial, eval_property
from .mesh import Mesh, node_volume_shares
from .solver import BoundarySpec, ResolvedBoundary, RunResult, SimState, resolve_boundary

SIZE_CAP = 10_000
CG_RTOL = 1.0e-10


@dataclass(frozen=True)
class AssembledSystem:
    """Global operators at a fixed property state.

    ``conduction`` is the assembled K (n x n, CSR); ``perfusion`` the
    diagonal of Kb; ``capacity`` either a diagonal vector (lumped) or a CSR
    matrix (consistent); ``const_load`` the temperature-independent load
    qb + qm.
    """

    conduction: sp.csr_matrix
    perfusion: np.ndarray
    capacity: np.ndarray | sp.csr_matrix
    const_load: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.perfusion.shape[0]

    @property
    def lumped(self) -> bool:
        return isinstance(self.capacity, np.ndarray)


def _as_field(temperatures, n: int) -> np.ndarray:
    temps = np.asarray(temperatures, dtype=np.float64)
    if temps.ndim == 0:
        return np.full(n, float(temps))
    if temps.shape != (n,):
        raise ConfigError(f"temperature field has shape {temps.shape}, expected ({n},)")
    return temps


def assemble(
    mesh: Mesh,
    material: TissueMaterial,
    temperatures,
    *,
    consistent_mass: bool = False,
    size_cap: int = SIZE_CAP,
) -> AssembledSystem:
    n = mesh.n_nodes
    if n > size_cap:
        raise SizeCapError(
            f"reference assembly capped at {size_cap} nodes, mesh has {n}"
        )
    temps = _as_field(temperatures, n)
    knodal = eval_property(material.conductivity, temps)
    rhoc = eval_property(material.density, temps) * eval_property(
        material.specific_heat, temps
    )

    k_rows, k_cols, k_vals = [], [], []
    m_rows, m_cols, m_vals = [], [], []
    for kind, conn in ((ElemKind.TET4, mesh.tets), (ElemKind.HEX8, mesh.hexes)):
        n_el = conn.shape[0]
        if n_el == 0:
            continue
        nn = kind.n_nodes
        a, vol = batch_precompute(kind, mesh.nodes[conn])
        kbar = knodal[conn].mean(axis=1)
        rows = np.broadcast_to(conn[:, :, None], (n_el, nn, nn)).ravel()
        cols = np.broadcast_to(conn[:, None, :], (n_el, nn, nn)).ravel()
        k_rows.append(rows)
        k_cols.append(cols)
        k_vals.append((a * kbar[:, None, None]).ravel())
        if consistent_mass:
            rhoc_bar = rhoc[conn].mean(axis=1)
            if kind is ElemKind.TET4:
                m_el = np.full((nn, nn), 1.0 / 20.0)
                np.fill_diagonal(m_el, 1.0 / 10.0)
                m_all = (rhoc_bar * vol)[:, None, None] * m_el
            else:
                # one-point rule: 8*detJ * N(0) N(0)^T with N(0) = 1/8 everywhere
                m_all = (rhoc_bar * vol / 64.0)[:, None, None] * np.ones((nn, nn))
            m_rows.append(rows)
            m_cols.append(cols)
            m_vals.append(m_all.ravel())

    conduction = sp.coo_matrix(
        (np.concatenate(k_vals), (np.concatenate(k_rows), np.concatenate(k_cols))),
        shape=(n, n),
    ).tocsr()

    vols = node_volume_shares(mesh)
    perfusion = material.perfusion_rate * material.blood_specific_heat * vols
    const_load = perfusion * material.arterial_temperature + material.metabolic_rate * vols

    if consistent_mass:
        capacity = sp.coo_matrix(
            (np.concatenate(m_vals), (np.concatenate(m_rows), np.concatenate(m_cols))),
            shape=(n, n),
        ).tocsr()
    else:
        capacity = rhoc * vols

    return AssembledSystem(
        conduction=conduction,
        perfusion=perfusion,
        capacity=capacity,
        const_load=const_load,
    )


def conjugate_gradient(matvec, b, x0=None, *, rtol=CG_RTOL, maxiter=None):
    """Plain CG for SPD operators; raises ConvergenceError if tolerance is missed."""
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if maxiter is None:
        maxiter = 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - matvec(x)
    p = r.copy()
    rs = float(r @ r)
    target = (rtol * max(float(np.linalg.norm(b)), np.finfo(np.float64).tiny)) ** 2
    it = 0
    while rs > target:
        if it >= maxiter:
            raise ConvergenceError(
                f"CG missed tolerance after {maxiter} iterations "
                f"(residual {math.sqrt(rs):.3e})"
            )
        ap = matvec(p)
        alpha = rs / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1
    return x


def implicit_step(
    system: AssembledSystem,
    temperatures: np.ndarray,
    dt: float,
    *,
    extra_load: np.ndarray | None = None,
    dirichlet: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """One backward-Euler step: (C/dt + K + Kb) T' = C/dt T + qb + qm + qr."""
    n = system.n_nodes
    temps = _as_field(temperatures, n)
    if system.lumped:
        lhs = (
            system.conduction
            + sp.diags(system.perfusion)
            + sp.diags(system.capacity / dt)
        ).tocsr()
        rhs = system.capacity * temps / dt + system.const_load
    else:
        c_over_dt = system.capacity / dt
        lhs = (system.conduction + sp.diags(system.perfusion) + c_over_dt).tocsr()
        rhs = c_over_dt @ temps + system.const_load
    if extra_load is not None:
        rhs = rhs + extra_load

    if dirichlet is None or dirichlet[0].size == 0:
        return conjugate_gradient(lhs.dot, rhs, x0=temps)

    nodes, values = dirichlet
    fixed = np.zeros(n, dtype=bool)
    fixed[nodes] = True
    free = ~fixed
    full = np.empty(n)
    full[nodes] = values
    lhs_ff = lhs[free][:, free].tocsr()
    rhs_f = rhs[free] - lhs[free][:, fixed].dot(full[fixed])
    full[free] = conjugate_gradient(lhs_ff.dot, rhs_f, x0=temps[free])
    return full


def dense_lambda_max(system: AssembledSystem, *, max_nodes: int = 300, tol: float = 1.0e-8) -> float:
    """Largest eigenvalue of C^-1 (K + Kb) by power iteration on a dense matrix.

    Works on the symmetric similarity transform C^-1/2 (K+Kb) C^-1/2, so the
    spectrum is real and non-negative.  Plain power steps stall when the top
    eigenvalues are clustered (symmetric meshes do this), so the operator is
    squared repeatedly first: applying the m-times-squared matrix to the
    start vector equals 2^m classic power steps, which resolves relative
    gaps far below ``tol`` at a fixed cost of m dense multiplies.  The
    returned Rayleigh quotient is residual-checked against ``tol``.
    Lumped capacity only, and capped at ``max_nodes`` nodes.
    """
    n = system.n_nodes
    if n > max_nodes:
        raise SizeCapError(f"dense eigenvalue check capped at {max_nodes} nodes, got {n}")
    if not system.lumped:
        raise ConfigError("dense eigenvalue check needs a lumped (diagonal) capacity")
    if np.any(system.capacity <= 0.0):
        raise ConfigError("dense eigenvalue check needs strictly positive capacities")

    dense = system.conduction.toarray() + np.diag(system.perfusion)
    half = 1.0 / np.sqrt(system.capacity)
    sym = half[:, None] * dense * half[None, :]
    sym = 0.5 * (sym + sym.T)  # exact symmetry despite assembly roundoff

    power = sym.copy()
    for _ in range(40):  # one application of `power` = 2^40 power steps
        norm = float(np.linalg.norm(power))
        if norm == 0.0:
            return 0.0
        power /= norm
        power = power @ power

    rng = np.random.default_rng(20240611)
    v = power @ rng.standard_normal(n)
    lam = 0.0
    for _ in range(1000):  # classic polishing steps with a residual stop
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            return 0.0
        v /= norm
        w = sym @ v
        lam = float(v @ w)
        if float(np.linalg.norm(w - lam * v)) <= tol * max(abs(lam), 1.0e-300):
            return lam
        v = w
    raise ConvergenceError(
        f"power iteration residual missed tolerance {tol:g} after squaring"
    )


def relative_error(reference: np.ndarray, candidate: np.ndarray) -> float:
    """Global field deviation sqrt(sum((ref - x)^2) / sum(ref^2))."""
    ref = np.asarray(reference, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    if ref.shape != cand.shape:
        raise ConfigError(f"field shapes differ: {ref.shape} vs {cand.shape}")
    denom = float(ref @ ref)
    if denom == 0.0:
        raise ConfigError("reference field is identically zero")
    diff = ref - cand
    return math.sqrt(float(diff @ diff) / denom)


def stats_summary(values: np.ndarray) -> dict[str, float]:
    """min/quartiles/max plus RMS; quartiles use linear interpolation on h=(n-1)q."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ConfigError("cannot summarize an empty field")
    q0, q1, q2, q3, q4 = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {
        "min": float(q0),
        "q1": float(q1),
        "median": float(q2),
        "q3": float(q3),
        "max": float(q4),
        "rms": float(math.sqrt(float(np.mean(vals * vals)))),
    }


def _loads_vector(resolved: ResolvedBoundary, time: float, n: int) -> np.ndarray | None:
    vec = None
    for nodes, power, t_start, t_end in resolved.loads:
        if t_start <= time < t_end:
            if vec is None:
                vec = np.zeros(n)
            vec[nodes] += power
    return vec


def run_reference(
    mesh: Mesh,
    material: TissueMaterial,
    boundary: BoundarySpec | None = None,
    *,
    initial_temperature,
    dt: float,
    steps: int,
    td_mode: bool | None = None,
    consistent_mass: bool = False,
    probes=None,
    probe_interval: int = 1,
    size_cap: int = SIZE_CAP,
) -> RunResult:
    """Backward-Euler trajectory with the same boundary semantics as the engine.

    Loads use the same half-open activation windows evaluated at the
    start-of-step time, and Dirichlet values are imposed exactly, so the
    two solvers integrate the same problem and differ only by their time
    discretization (and mass treatment when ``consistent_mass`` is set).
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ConfigError(f"dt must be positive and finite, got {dt}")
    resolved = resolve_boundary(boundary or BoundarySpec(), mesh)
    n = mesh.n_nodes
    temps = _as_field(initial_temperature, n).copy()
    temps[resolved.dirichlet_nodes] = resolved.dirichlet_values
    td = (not material.is_constant) if td_mode is None else bool(td_mode)

    probe_nodes = np.asarray([] if probes is None else probes, dtype=np.int64)
    probe_times = [0.0]
    probe_rows = [temps[probe_nodes].copy()]

    system = assemble(
        mesh, material, temps, consistent_mass=consistent_mass, size_cap=size_cap
    )
    dirichlet = (resolved.dirichlet_nodes, resolved.dirichlet_values)
    for k in range(steps):
        if td and k > 0:
            system = assemble(
                mesh, material, temps, consistent_mass=consistent_mass, size_cap=size_cap
            )
        qr = _loads_vector(resolved, k * dt, n)
        temps = implicit_step(system, temps, dt, extra_load=qr, dirichlet=dirichlet)
        if (k + 1) % probe_interval == 0:
            probe_times.append((k + 1) * dt)
            probe_rows.append(temps[probe_nodes].copy())

    state = SimState(temperatures=temps, time=steps * dt, step_index=steps)
    return RunResult(
        state=state,
        dt=dt,
        n_steps=steps,
        dt_critical=math.nan,
        td_mode=td,
        workers=1,
        probe_nodes=probe_nodes,
        probe_times=np.asarray(probe_times),
        probe_values=np.asarray(probe_rows) if probe_rows else np.empty((0, 0)),
        timings={},
    )
