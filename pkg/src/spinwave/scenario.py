"""Scenario files: strict JSON schema, SI units, unit-suffixed field names.

Every field has a default describing the paraffin-coated cell experiment
(50 mm x 5 mm cylinder at 78 C, 795 nm write light), so a scenario file only
needs to list what it changes.  Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .ensemble import RB87_MASS, GasModel, ThermalConfig, WallModel
from .geometry import RB87_HYPERFINE_HZ, BeamGeometry, CellGeometry, mode_from_angle

__all__ = ["Scenario", "ScenarioError", "load_scenario", "scenario_hash", "time_grid"]


class ScenarioError(ValueError):
    """Schema violation; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class WallSpec(_Strict):
    kind: Literal["paraffin", "bare", "none"] = "paraffin"
    spin_destruction_prob: float | None = Field(default=None, ge=0.0, le=1.0)
    reflection: Literal["diffuse_thermal", "specular"] = "diffuse_thermal"


class CellSpec(_Strict):
    length_m: float = Field(default=0.05, gt=0)
    radius_m: float = Field(default=0.0025, gt=0)
    wall: WallSpec = WallSpec()


class GasSpec(_Strict):
    kind: Literal["none", "buffer"] = "none"
    velocity_reset_rate_hz: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _none_has_no_rate(self):
        if self.kind == "none" and self.velocity_reset_rate_hz != 0:
            raise ValueError("kind 'none' requires velocity_reset_rate_hz = 0")
        return self


class ThermalSpec(_Strict):
    temperature_k: float = Field(default=351.15, gt=0)
    atomic_mass_kg: float = Field(default=RB87_MASS, gt=0)


class OpticsSpec(_Strict):
    write_wavelength_m: float = Field(default=795e-9, gt=0)
    hyperfine_split_hz: float = Field(default=RB87_HYPERFINE_HZ, ge=0)
    detection_angle_rad: float = Field(default=0.0, ge=0, lt=math.pi / 2)
    write_waist_m: float = Field(default=1.5e-3, gt=0)
    # null means a uniform read beam
    read_waist_m: float | None = Field(default=5e-3, gt=0)
    profile: Literal["gaussian", "tophat"] = "gaussian"


class TimeGridSpec(_Strict):
    t_max_s: float = Field(default=300e-6, gt=0)
    n_points: int = Field(default=61, ge=2)
    spacing: Literal["linear", "log"] = "linear"
    # first nonzero time of a log grid; defaults to t_max_s * 1e-5
    t_min_s: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _t_min_below_t_max(self):
        if self.t_min_s is not None and self.t_min_s >= self.t_max_s:
            raise ValueError("t_min_s must be smaller than t_max_s")
        return self


class SimSpec(_Strict):
    n_atoms: int = Field(default=20_000, ge=1)
    seed: int = Field(default=1, ge=0, lt=2**64)
    time_grid: TimeGridSpec = TimeGridSpec()


class AnalysisSpec(_Strict):
    convention: Literal["phased_array", "single_excitation"] = "phased_array"
    fit_models: list[Literal["exp1", "gauss1", "exp2"]] = ["exp1", "gauss1", "exp2"]


class StimulationSpec(_Strict):
    gain_per_watt: float = Field(gt=0)
    decay_rate_hz: float = Field(ge=0)
    threshold: float = Field(default=1e4, ge=1)
    powers_w: list[float]

    @field_validator("powers_w")
    @classmethod
    def _ascending_positive(cls, v):
        if not v or any(p <= 0 for p in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("powers must be positive and strictly ascending")
        return v


class Scenario(_Strict):
    cell: CellSpec = CellSpec()
    gas: GasSpec = GasSpec()
    thermal: ThermalSpec = ThermalSpec()
    optics: OpticsSpec = OpticsSpec()
    sim: SimSpec = SimSpec()
    analysis: AnalysisSpec = AnalysisSpec()
    stimulation: StimulationSpec | None = None

    # conversions to the library types
    def cell_geometry(self) -> CellGeometry:
        w = self.cell.wall
        return CellGeometry(
            self.cell.length_m,
            self.cell.radius_m,
            WallModel(w.kind, w.spin_destruction_prob, w.reflection),
        )

    def beam_geometry(self) -> BeamGeometry:
        o = self.optics
        read = math.inf if o.read_waist_m is None else o.read_waist_m
        return BeamGeometry(o.write_waist_m, read, o.detection_angle_rad, o.profile)

    def thermal_config(self) -> ThermalConfig:
        return ThermalConfig(self.thermal.temperature_k, self.thermal.atomic_mass_kg)

    def gas_model(self) -> GasModel:
        return GasModel(self.gas.kind, self.gas.velocity_reset_rate_hz)

    def spin_wave_mode(self):
        o = self.optics
        return mode_from_angle(o.write_wavelength_m, o.detection_angle_rad, o.hyperfine_split_hz)

    def time_grid(self) -> np.ndarray:
        return time_grid(self.sim.time_grid)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)


def time_grid(spec: TimeGridSpec) -> np.ndarray:
    """Strictly increasing grid starting at 0 (log grids prepend the zero)."""
    if spec.spacing == "linear":
        return np.linspace(0.0, spec.t_max_s, spec.n_points)
    t_min = spec.t_min_s if spec.t_min_s is not None else spec.t_max_s * 1e-5
    return np.concatenate(([0.0], np.geomspace(t_min, spec.t_max_s, spec.n_points - 1)))


def _error_path(err: ValidationError) -> ScenarioError:
    first = err.errors()[0]
    path = ".".join(str(p) for p in first["loc"])
    return ScenarioError(path, first["msg"])


def parse_scenario(data: dict) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as err:
        raise _error_path(err) from None


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ScenarioError("", f"invalid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ScenarioError("", "scenario must be a JSON object")
    return parse_scenario(data)


def scenario_hash(scenario: Scenario) -> str:
    return hashlib.sha256(scenario.to_json().encode()).hexdigest()


def set_field(scenario: Scenario, dotted: str, value) -> Scenario:
    """Copy of ``scenario`` with the scalar field at ``dotted`` replaced."""
    data = scenario.model_dump(mode="json")
    parts = dotted.split(".")
    node = data
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node, dict) or part not in node or not isinstance(node[part], dict):
            raise ScenarioError(".".join(parts[: i + 1]), "not a scenario section")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ScenarioError(dotted, "unknown field")
    if isinstance(node[leaf], (dict, list)):
        raise ScenarioError(dotted, "not a scalar field")
    node[leaf] = value
    return parse_scenario(data)


def get_field(scenario: Scenario, dotted: str):
    node = scenario.model_dump(mode="json")
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ScenarioError(dotted, "unknown field")
        node = node[part]
    return node
