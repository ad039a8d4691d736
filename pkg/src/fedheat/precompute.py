"""Per-node lumped quantities that stay fixed for the whole run.

Each node owns an equal share of the volume of every element touching it.
From those shares we precompute the perfusion conductance
``wb * cb * v_i`` (W/K), the matching arterial heat ``wb * cb * v_i * Ta``
(W) and the metabolic heat ``Qm * v_i`` (W).  The arterial heat is stored
as ``conductance * Ta`` with the same float multiply the update kernel
applies to the temperature, so a node sitting exactly at the arterial
temperature sees a bitwise-zero net perfusion term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .material import TissueMaterial, eval_property
from .mesh import Mesh, node_volume_shares


@dataclass(frozen=True)
class LumpedSystem:
    node_volumes: np.ndarray
    perfusion_conductance: np.ndarray
    perfusion_heat: np.ndarray
    metabolic_heat: np.ndarray

    def __post_init__(self):
        for arr in (
            self.node_volumes,
            self.perfusion_conductance,
            self.perfusion_heat,
            self.metabolic_heat,
        ):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.node_volumes.shape[0]


def build_lumped(mesh: Mesh, material: TissueMaterial) -> LumpedSystem:
    vols = node_volume_shares(mesh)
    conductance = material.perfusion_rate * material.blood_specific_heat * vols
    heat = conductance * material.arterial_temperature
    metabolic = material.metabolic_rate * vols
    return LumpedSystem(
        node_volumes=vols,
        perfusion_conductance=conductance,
        perfusion_heat=heat,
        metabolic_heat=metabolic,
    )


def lumped_mass(
    material: TissueMaterial, node_volumes: np.ndarray, temperature: np.ndarray
) -> np.ndarray:
    """Diagonal heat capacity rho(T) * c(T) * v per node (J/K)."""
    rho = eval_property(material.density, temperature)
    c = eval_property(material.specific_heat, temperature)
    return rho * c * node_volumes
