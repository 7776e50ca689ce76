"""Optical wavevectors, spin-wave modes and cell/beam geometry.

All quantities are SI.  The shared frame has the cell axis along ``z``; the
write beam propagates along ``+z`` and the Stokes collection direction is
tilted by the detection angle in the ``x-z`` plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

C_LIGHT = 299_792_458.0
RB87_HYPERFINE_HZ = 6.834682610904e9

__all__ = [
    "C_LIGHT",
    "RB87_HYPERFINE_HZ",
    "OpticalMode",
    "SpinWaveMode",
    "CellGeometry",
    "BeamGeometry",
    "spin_wave_mode",
    "mode_from_angle",
    "dephasing_negligible",
    "max_angle_for_wavelength",
    "small_angle_lambda_spin",
    "beam_amplitude",
]


@dataclass(frozen=True)
class OpticalMode:
    wavelength: float
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength!r}")
        norm = math.sqrt(sum(c * c for c in self.direction))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit vector (norm {norm!r})")

    @property
    def k(self) -> np.ndarray:
        return 2 * math.pi / self.wavelength * np.asarray(self.direction, dtype=float)


@dataclass(frozen=True, eq=False)
class SpinWaveMode:
    """Spin-wave wavevector ``k_write - k_stokes``.

    A zero wavevector is a legal, uniform-phase mode; its ``lambda_spin`` is
    ``inf`` and ``infinite_wavelength`` is set.
    """

    delta_k_vec: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def delta_k_mag(self) -> float:
        return float(np.linalg.norm(self.delta_k_vec))

    @property
    def lambda_spin(self) -> float:
        mag = self.delta_k_mag
        return math.inf if mag == 0.0 else 2 * math.pi / mag

    @property
    def infinite_wavelength(self) -> bool:
        return self.delta_k_mag == 0.0


@dataclass(frozen=True)
class CellGeometry:
    """Cylindrical vapor cell centred on the origin, axis along z."""

    length: float
    radius: float
    wall_model: "object | None" = None

    def __post_init__(self):
        if not (self.length > 0 and self.radius > 0):
            raise ValueError("cell length and radius must be positive")

    @property
    def volume(self) -> float:
        return math.pi * self.radius**2 * self.length

    @property
    def surface(self) -> float:
        return 2 * math.pi * self.radius * (self.radius + self.length)


@dataclass(frozen=True)
class BeamGeometry:
    """Write/read beams coaxial with the cell.

    Waists are 1/e^2 intensity radii for the gaussian profile and hard radii
    for the tophat profile.  ``read_waist = inf`` gives a uniform read beam.
    """

    write_waist: float
    read_waist: float
    detection_angle: float = 0.0
    profile: Literal["gaussian", "tophat"] = "gaussian"

    def __post_init__(self):
        if not (self.write_waist > 0 and self.read_waist > 0):
            raise ValueError("beam waists must be positive")
        if not 0.0 <= self.detection_angle < math.pi / 2:
            raise ValueError("detection angle must lie in [0, pi/2)")
        if self.profile not in ("gaussian", "tophat"):
            raise ValueError(f"unknown beam profile {self.profile!r}")


def beam_amplitude(rho2: np.ndarray, waist: float, profile: str) -> np.ndarray:
    """Field amplitude (square root of intensity) at squared radius ``rho2``."""
    rho2 = np.asarray(rho2, dtype=float)
    if math.isinf(waist):
        return np.ones_like(rho2)
    if profile == "gaussian":
        return np.exp(-rho2 / waist**2)
    return (rho2 <= waist**2).astype(float)


def spin_wave_mode(write: OpticalMode, stokes: OpticalMode) -> SpinWaveMode:
    """Spin-wave mode from explicit write and Stokes optical modes."""
    return SpinWaveMode(write.k - stokes.k)


def mode_from_angle(
    write_wavelength: float,
    detection_angle: float,
    hyperfine_split_hz: float = RB87_HYPERFINE_HZ,
) -> SpinWaveMode:
    """Spin-wave mode for a Stokes photon collected at ``detection_angle``.

    The Stokes frequency is the write frequency minus the ground-state
    splitting, which makes the collinear limit ``lambda_spin = c / split``.
    """
    nu_w = C_LIGHT / write_wavelength
    nu_s = nu_w - hyperfine_split_hz
    if nu_s <= 0:
        raise ValueError("hyperfine offset exceeds the write frequency")
    write = OpticalMode(write_wavelength, (0.0, 0.0, 1.0))
    stokes = OpticalMode(
        C_LIGHT / nu_s, (math.sin(detection_angle), 0.0, math.cos(detection_angle))
    )
    return spin_wave_mode(write, stokes)


def dephasing_negligible(
    mode: SpinWaveMode, extent: float, threshold: float = 0.1
) -> tuple[bool, float]:
    """Return ``(dk * l < threshold * pi, dk * l)`` for ensemble size ``extent``."""
    if not extent > 0:
        raise ValueError("extent must be positive")
    product = mode.delta_k_mag * extent
    return product < threshold * math.pi, product


def small_angle_lambda_spin(write_wavelength: float, detection_angle: float) -> float:
    """``lambda_w / sin(theta)``; ``inf`` at zero angle."""
    s = math.sin(detection_angle)
    return math.inf if s == 0.0 else write_wavelength / s


def max_angle_for_wavelength(write_wavelength: float, target_lambda_spin: float) -> float:
    """Largest detection angle giving a spin wavelength of at least the target.

    Uses the small-angle relation ``lambda_spin = lambda_w / sin(theta)``.
    """
    if not (write_wavelength > 0 and target_lambda_spin > 0):
        raise ValueError("wavelengths must be positive")
    if target_lambda_spin <= write_wavelength:
        raise ValueError("target spin wavelength must exceed the write wavelength")
    return math.asin(write_wavelength / target_lambda_spin)
