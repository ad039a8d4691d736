"""Explicit matrix-free finite-element solver for tissue heat transfer.

Importing the package configures numba's threading (see `fedheat.kernels`),
so import fedheat before other numba users in the same process.
"""

from . import kernels  # noqa: F401  (threading env setup must run first)
from .element import ElemKind, ElementPrecomp, build_precomp, hex_geometry, tet_geometry
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateElementError,
    FedheatError,
    InstabilityError,
    MeshFormatError,
    SizeCapError,
)
from .material import PropertyCurve, TissueMaterial, eval_property, make_constant
from .mesh import Mesh, node_volume_shares, parse_mesh, parse_mesh_text, serialize_mesh
from .meshgen import generate_cube_mesh
from .precompute import LumpedSystem, build_lumped, lumped_mass
from .scenario import Scenario, load_scenario, parse_scenario_text
from .solver import (
    BoundarySpec,
    ExplicitEngine,
    PackedElements,
    RunResult,
    SimState,
    critical_dt,
    element_conductivity,
    element_loads,
    run_simulation,
    scatter_loads,
)

try:
    from importlib.metadata import PackageNotFoundError, version

    __version__ = version("fedheat")
except PackageNotFoundError:  # pragma: no cover - source tree without install
    __version__ = "0.0.0+unknown"

__all__ = [
    "BoundarySpec",
    "ConfigError",
    "ConvergenceError",
    "DegenerateElementError",
    "ElemKind",
    "ElementPrecomp",
    "ExplicitEngine",
    "FedheatError",
    "InstabilityError",
    "LumpedSystem",
    "Mesh",
    "MeshFormatError",
    "PackedElements",
    "PropertyCurve",
    "RunResult",
    "Scenario",
    "SimState",
    "SizeCapError",
    "TissueMaterial",
    "build_lumped",
    "build_precomp",
    "critical_dt",
    "element_conductivity",
    "element_loads",
    "eval_property",
    "generate_cube_mesh",
    "hex_geometry",
    "load_scenario",
    "lumped_mass",
    "make_constant",
    "node_volume_shares",
    "parse_mesh",
    "parse_mesh_text",
    "parse_scenario_text",
    "run_simulation",
    "scatter_loads",
    "serialize_mesh",
    "tet_geometry",
]
