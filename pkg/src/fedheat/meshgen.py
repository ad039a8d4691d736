"""Deterministic structured cube meshes for verification and benchmarks.

``generate_cube_mesh`` builds an axis-aligned cube of edge ``size`` split
into ``divisions`` cells per axis, as hexes or as tets (each cell split
into six tets along the main diagonal, orientation-corrected so every tet
has positive volume).  Node sets: the six faces ``x0 x1 y0 y1 z0 z1`` and
the single node ``center`` nearest the cube centroid (lowest index wins
ties).  The same arguments always produce the identical mesh.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

from .element import ElemKind
from .errors import ConfigError
from .mesh import Mesh


def _tet_corner_patterns() -> list[np.ndarray]:
    """Six tets per cell: lattice paths (0,0,0) -> (1,1,1), fixed orientation."""
    unit = np.eye(3, dtype=np.int64)
    patterns = []
    for perm in permutations(range(3)):
        inversions = sum(
            perm[a] > perm[b] for a in range(3) for b in range(a + 1, 3)
        )
        v0 = np.zeros(3, dtype=np.int64)
        v1 = v0 + unit[perm[0]]
        v2 = v1 + unit[perm[1]]
        v3 = v2 + unit[perm[2]]
        if inversions % 2 == 0:
            patterns.append(np.stack([v0, v1, v2, v3]))
        else:
            patterns.append(np.stack([v0, v2, v1, v3]))
    return patterns


_TET_PATTERNS = _tet_corner_patterns()

# bottom face counter-clockwise, then top; matches element.HEX_VERTEX_SIGNS
_HEX_OFFSETS = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ],
    dtype=np.int64,
)


def generate_cube_mesh(kind, divisions: int, size: float) -> Mesh:
    if isinstance(kind, str):
        try:
            kind = ElemKind(kind if kind in ("tet4", "hex8") else {"tet": "tet4", "hex": "hex8"}[kind])
        except KeyError:
            raise ConfigError(f"unknown element kind {kind!r} (use 'tet' or 'hex')") from None
    divisions = int(divisions)
    if divisions < 1:
        raise ConfigError(f"divisions must be >= 1, got {divisions}")
    size = float(size)
    if not (size > 0.0 and np.isfinite(size)):
        raise ConfigError(f"size must be positive and finite, got {size}")

    npts = divisions + 1
    axis = np.linspace(0.0, size, npts)
    zz, yy, xx = np.meshgrid(axis, axis, axis, indexing="ij")
    nodes = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    def node_index(i, j, k):
        return i + npts * (j + npts * k)

    ci, cj, ck = np.meshgrid(
        np.arange(divisions), np.arange(divisions), np.arange(divisions), indexing="ij"
    )
    ci, cj, ck = ci.ravel(), cj.ravel(), ck.ravel()

    def corner_column(offsets: np.ndarray) -> np.ndarray:
        # (n_cells, n_corners) node ids for the given corner offsets
        return np.stack(
            [node_index(ci + di, cj + dj, ck + dk) for di, dj, dk in offsets], axis=1
        )

    tets = np.empty((0, 4), dtype=np.int64)
    hexes = np.empty((0, 8), dtype=np.int64)
    if kind is ElemKind.TET4:
        per_pattern = [corner_column(p) for p in _TET_PATTERNS]
        # interleave so all six tets of a cell are adjacent in element order
        tets = np.stack(per_pattern, axis=1).reshape(-1, 4)
    else:
        hexes = corner_column(_HEX_OFFSETS)

    gi, gj, gk = np.meshgrid(
        np.arange(npts), np.arange(npts), np.arange(npts), indexing="ij"
    )
    flat = node_index(gi, gj, gk)
    node_sets = {
        "x0": flat[0, :, :].ravel(),
        "x1": flat[-1, :, :].ravel(),
        "y0": flat[:, 0, :].ravel(),
        "y1": flat[:, -1, :].ravel(),
        "z0": flat[:, :, 0].ravel(),
        "z1": flat[:, :, -1].ravel(),
    }
    centroid = np.full(3, size / 2.0)
    nearest = int(np.argmin(((nodes - centroid) ** 2).sum(axis=1)))
    node_sets["center"] = np.array([nearest], dtype=np.int64)

    return Mesh(nodes=nodes, tets=tets, hexes=hexes, node_sets=node_sets)
