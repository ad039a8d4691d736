"""Tissue material model: piecewise-linear property curves plus perfusion data.

Density, specific heat and conductivity are each a `PropertyCurve`,
evaluated by linear interpolation with clamping outside the tabulated
range.  A constant property is a single-point curve.  Perfusion and
metabolism are scalars: volumetric perfusion rate (kg/(m^3 s)), blood
specific heat (J/(kg K)), arterial temperature (deg C) and metabolic heat
generation (W/m^3).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class PropertyCurve:
    temperatures: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        temps = np.atleast_1d(np.asarray(self.temperatures, dtype=np.float64))
        vals = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if temps.ndim != 1 or temps.shape != vals.shape or temps.size == 0:
            raise ConfigError(
                f"property curve needs matching 1-D knots, got {temps.shape} and {vals.shape}"
            )
        if not (np.all(np.isfinite(temps)) and np.all(np.isfinite(vals))):
            raise ConfigError("property curve contains non-finite entries")
        if temps.size > 1 and not np.all(np.diff(temps) > 0):
            raise ConfigError("property-curve temperatures must be strictly increasing")
        temps.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "temperatures", temps)
        object.__setattr__(self, "values", vals)

    @property
    def is_constant(self) -> bool:
        return self.values.size == 1 or bool(np.all(self.values == self.values[0]))

    def __call__(self, temperature):
        return eval_property(self, temperature)


def make_constant(value: float) -> PropertyCurve:
    return PropertyCurve(np.array([0.0]), np.array([float(value)]))


def eval_property(curve: PropertyCurve, temperature):
    """Piecewise-linear evaluation, clamped to the end values outside the knots.

    Scalar in, float out; array in, float64 array out.  Exact at the knots.
    """
    t = np.asarray(temperature, dtype=np.float64)
    out = np.interp(t, curve.temperatures, curve.values)
    if np.ndim(temperature) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class TissueMaterial:
    density: PropertyCurve
    specific_heat: PropertyCurve
    conductivity: PropertyCurve
    perfusion_rate: float = 0.0
    blood_specific_heat: float = 3617.0
    arterial_temperature: float = 37.0
    metabolic_rate: float = 0.0

    def __post_init__(self):
        for name in ("density", "specific_heat", "conductivity"):
            curve = getattr(self, name)
            if not isinstance(curve, PropertyCurve):
                raise ConfigError(f"{name} must be a PropertyCurve")
            if np.any(curve.values <= 0.0):
                raise ConfigError(f"{name} curve must be strictly positive everywhere")
        if self.perfusion_rate < 0.0:
            raise ConfigError("perfusion rate must be >= 0")
        if self.blood_specific_heat <= 0.0:
            raise ConfigError("blood specific heat must be > 0")
        if self.metabolic_rate < 0.0:
            raise ConfigError("metabolic rate must be >= 0")
        if not np.isfinite(self.arterial_temperature):
            raise ConfigError("arterial temperature must be finite")

    @property
    def is_constant(self) -> bool:
        """True when no thermal property actually varies with temperature."""
        return (
            self.density.is_constant
            and self.specific_heat.is_constant
            and self.conductivity.is_constant
        )

    @classmethod
    def constant(
        cls,
        *,
        density: float,
        specific_heat: float,
        conductivity: float,
        perfusion_rate: float = 0.0,
        blood_specific_heat: float = 3617.0,
        arterial_temperature: float = 37.0,
        metabolic_rate: float = 0.0,
    ) -> "TissueMaterial":
        return cls(
            density=make_constant(density),
            specific_heat=make_constant(specific_heat),
            conductivity=make_constant(conductivity),
            perfusion_rate=float(perfusion_rate),
            blood_specific_heat=float(blood_specific_heat),
            arterial_temperature=float(arterial_temperature),
            metabolic_rate=float(metabolic_rate),
        )

    def with_updates(self, **kwargs) -> "TissueMaterial":
        return replace(self, **kwargs)
