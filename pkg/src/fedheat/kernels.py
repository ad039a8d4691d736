"""Numba kernels for the explicit update, plus worker-count control.

Importing this module configures numba's threading before numba itself is
imported: the OpenMP layer (the TBB one is noisy-to-unavailable in common
sandboxes) and a thread-pool size of at least eight so worker-count sweeps
behave the same on small machines.  Respect these by importing fedheat
before anything else that pulls in numba.

Determinism contract: the element scatter partitions elements into
fixed-size contiguous chunks (size is a build-time constant of the packed
mesh, never derived from the worker count).  Each chunk accumulates into
its own private buffer; per-node results are then reduced over chunks in
ascending chunk order.  Changing the number of worker threads therefore
cannot change a single bit of the output, only how chunks are scheduled.
The memory cost is one buffer of ``n_nodes`` floats per chunk.
"""

from __future__ import annotations

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
if "NUMBA_NUM_THREADS" not in os.environ:
    os.environ["NUMBA_NUM_THREADS"] = str(max(os.cpu_count() or 1, 8))

import numba
import numpy as np
from numba import njit, prange

from .errors import ConfigError


def max_workers() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


def set_workers(count: int) -> int:
    """Set the numba thread count, clamped to [1, max_workers()]."""
    count = int(count)
    if count < 1:
        raise ConfigError(f"worker count must be >= 1, got {count}")
    applied = min(count, max_workers())
    numba.set_num_threads(applied)
    return applied


def default_workers() -> int:
    """Worker count from FEDHEAT_THREADS, else the pool maximum."""
    env = os.environ.get("FEDHEAT_THREADS")
    if env:
        try:
            count = int(env)
        except ValueError:
            raise ConfigError(f"FEDHEAT_THREADS must be an integer, got {env!r}") from None
        if count < 1:
            raise ConfigError(f"FEDHEAT_THREADS must be >= 1, got {count}")
        return min(count, max_workers())
    return max_workers()


@njit(cache=True, inline="always")
def _interp_clamped(xs, ys, x):
    # same slope arithmetic as np.interp so both paths agree bitwise
    m = xs.shape[0]
    if m == 1 or x <= xs[0]:
        return ys[0]
    if x >= xs[m - 1]:
        return ys[m - 1]
    j = 0
    while xs[j + 1] <= x:
        j += 1
    slope = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j])
    return slope * (x - xs[j]) + ys[j]


@njit(cache=True, parallel=True)
def eval_curve_nodes(xs, ys, temps, out):
    for i in prange(temps.shape[0]):
        out[i] = _interp_clamped(xs, ys, temps[i])


@njit(cache=True, parallel=True)
def lumped_capacity_nodes(rho_x, rho_y, c_x, c_y, temps, vols, out):
    for i in prange(temps.shape[0]):
        t = temps[i]
        out[i] = _interp_clamped(rho_x, rho_y, t) * _interp_clamped(c_x, c_y, t) * vols[i]


@njit(cache=True, parallel=True)
def element_mean_nodal(conn_data, conn_offs, nodal, out):
    """Per-element mean of a nodal field (sequential local-node order)."""
    for e in prange(conn_offs.shape[0] - 1):
        lo = conn_offs[e]
        hi = conn_offs[e + 1]
        s = 0.0
        for p in range(lo, hi):
            s += nodal[conn_data[p]]
        out[e] = s / (hi - lo)


@njit(cache=True, parallel=True)
def scatter_net_loads(
    conn_data, conn_offs, mat_data, mat_offs, kbar, temps, n_chunks, chunk_size, buffers, out
):
    """Net conduction inflow per node: out[i] = -sum_e kbar_e * (A_e @ T_e)[i].

    The local temperature vector is shifted by its first entry before the
    matrix product; each A row sums to zero analytically, so the shift is
    exact and a uniform field yields a bitwise-zero result.
    """
    n_nodes = out.shape[0]
    n_elem = conn_offs.shape[0] - 1
    for c in prange(n_chunks):
        for i in range(n_nodes):
            buffers[c, i] = 0.0
        lo = c * chunk_size
        hi = min(lo + chunk_size, n_elem)
        for e in range(lo, hi):
            p0 = conn_offs[e]
            n = conn_offs[e + 1] - p0
            m0 = mat_offs[e]
            ke = kbar[e]
            t0 = temps[conn_data[p0]]
            for a in range(n):
                row = m0 + a * n
                acc = 0.0
                for b in range(n):
                    acc += mat_data[row + b] * (temps[conn_data[p0 + b]] - t0)
                buffers[c, conn_data[p0 + a]] -= ke * acc
    for i in prange(n_nodes):
        s = 0.0
        for c in range(n_chunks):
            s += buffers[c, i]
        out[i] = s


@njit(cache=True, parallel=True)
def nodal_update(temps, inflow, capacity, perf_k, perf_q, metab_q, extra_q, dt):
    """One explicit step in place; rate terms are W, capacity J/K."""
    for i in prange(temps.shape[0]):
        rate = inflow[i] - perf_k[i] * temps[i] + perf_q[i] + metab_q[i] + extra_q[i]
        temps[i] += dt * rate / capacity[i]


def warmup() -> None:
    """Force-compile every kernel on toy inputs (cache-backed, cheap after once)."""
    xs = np.array([0.0, 1.0])
    ys = np.array([1.0, 2.0])
    t = np.array([0.25, 0.75])
    out2 = np.empty(2)
    eval_curve_nodes(xs, ys, t, out2)
    lumped_capacity_nodes(xs, ys, xs, ys, t, np.ones(2), out2)
    conn = np.array([0, 1], dtype=np.int64)
    offs = np.array([0, 2], dtype=np.int64)
    mat = np.array([1.0, -1.0, -1.0, 1.0])
    moffs = np.array([0, 4], dtype=np.int64)
    element_mean_nodal(conn, offs, np.ones(2), np.empty(1))
    scatter_net_loads(
        conn, offs, mat, moffs, np.ones(1), t, 1, 1, np.zeros((1, 2)), out2
    )
    nodal_update(t.copy(), out2, np.ones(2), np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2), 0.1)
