"""Legacy VTK (ASCII, file version 2.0) writer for field snapshots.

Unstructured grid with cell types 10 (tet) and 12 (hex), one SCALARS
block per nodal field.  Values keep full float precision via repr.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError
from .mesh import Mesh

_CELL_TYPE_TET = 10
_CELL_TYPE_HEX = 12


def vtk_text(mesh: Mesh, point_data: dict[str, np.ndarray], title: str = "fedheat snapshot") -> str:
    lines = [
        "# vtk DataFile Version 2.0",
        title.splitlines()[0][:255] if title else "fedheat snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines.extend(
        f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.nodes
    )

    n_cells = mesh.n_elements
    total = mesh.tets.size + mesh.tets.shape[0] + mesh.hexes.size + mesh.hexes.shape[0]
    lines.append(f"CELLS {n_cells} {total}")
    lines.extend("4 " + " ".join(map(str, row)) for row in mesh.tets)
    lines.extend("8 " + " ".join(map(str, row)) for row in mesh.hexes)
    lines.append(f"CELL_TYPES {n_cells}")
    lines.extend([str(_CELL_TYPE_TET)] * mesh.tets.shape[0])
    lines.extend([str(_CELL_TYPE_HEX)] * mesh.hexes.shape[0])

    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=np.float64)
            if values.shape != (mesh.n_nodes,):
                raise ConfigError(
                    f"field {name!r} has shape {values.shape}, expected ({mesh.n_nodes},)"
                )
            safe = name.replace(" ", "_")
            lines.append(f"SCALARS {safe} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in values)
    return "\n".join(lines) + "\n"


def write_vtk(path, mesh: Mesh, point_data: dict[str, np.ndarray], title: str = "fedheat snapshot") -> None:
    Path(path).write_text(vtk_text(mesh, point_data, title))
