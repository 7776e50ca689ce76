"""Thermal atoms in a cylindrical cell: sampling and event-driven transport.

Atoms fly ballistically between events.  An event is either a wall hit
(side wall or end cap, found by solving the flight line against the
cylinder) or a strong buffer-gas collision that redraws the velocity from the
Maxwell-Boltzmann distribution.  Wall hits may destroy the spin coherence of
the atom with a fixed probability.

The ensemble is stored as a struct of arrays and propagated in vectorized
form.  Each atom owns a counter-based random stream (see :mod:`spinwave.rng`),
so results do not depend on batching or evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import rng
from .geometry import BeamGeometry, CellGeometry

K_B = 1.380649e-23
RB87_MASS = 86.909180527 * 1.66053906660e-27

__all__ = [
    "K_B",
    "RB87_MASS",
    "ThermalConfig",
    "WallModel",
    "GasModel",
    "AtomState",
    "Ensemble",
    "PropagationError",
    "sample_ensemble",
    "advance",
    "propagate",
    "mean_wall_collision_time",
    "atom_collision_time_estimate",
]

# random-draw slots; counter 0 is reserved for the initial condition
_SLOT_POS = (0, 1, 2)
_SLOT_VEL0 = (3, 4, 5)
_SLOT_GAS0 = 6
_SLOT_EVT_VEL = (0, 1, 2)
_SLOT_EVT_SPIN = 3
_SLOT_EVT_GAS = 4

_EDGE_EPS = 1e-12
_MAX_STALLED_EVENTS = 64


class PropagationError(RuntimeError):
    """Raised when an atom cannot be advanced; carries the atom's stream id."""

    def __init__(self, message: str, stream_id: int):
        super().__init__(f"{message} (stream_id={stream_id})")
        self.stream_id = stream_id


@dataclass(frozen=True)
class ThermalConfig:
    temperature: float
    atomic_mass: float = RB87_MASS

    def __post_init__(self):
        if not (self.temperature > 0 and self.atomic_mass > 0):
            raise ValueError("temperature and mass must be positive")

    @property
    def sigma_v(self) -> float:
        """Per-axis velocity standard deviation."""
        return math.sqrt(K_B * self.temperature / self.atomic_mass)

    @property
    def mean_speed(self) -> float:
        return math.sqrt(8 * K_B * self.temperature / (math.pi * self.atomic_mass))


_DEFAULT_P = {"bare": 1.0, "paraffin": 1e-4, "none": 0.0}


@dataclass(frozen=True)
class WallModel:
    """Wall behaviour.

    ``kind="none"`` removes the walls entirely (free flight in unbounded
    space), which is what the analytic dephasing oracles assume.
    """

    kind: Literal["paraffin", "bare", "none"] = "paraffin"
    spin_destruction_prob: float | None = None
    reflection: Literal["diffuse_thermal", "specular"] = "diffuse_thermal"

    def __post_init__(self):
        if self.kind not in _DEFAULT_P:
            raise ValueError(f"unknown wall kind {self.kind!r}")
        if self.reflection not in ("diffuse_thermal", "specular"):
            raise ValueError(f"unknown reflection law {self.reflection!r}")
        if self.spin_destruction_prob is None:
            object.__setattr__(self, "spin_destruction_prob", _DEFAULT_P[self.kind])
        if not 0.0 <= self.spin_destruction_prob <= 1.0:
            raise ValueError("spin_destruction_prob must lie in [0, 1]")


@dataclass(frozen=True)
class GasModel:
    kind: Literal["none", "buffer"] = "none"
    velocity_reset_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "buffer"):
            raise ValueError(f"unknown gas kind {self.kind!r}")
        if self.velocity_reset_rate < 0:
            raise ValueError("velocity_reset_rate must be non-negative")
        if self.kind == "none" and self.velocity_reset_rate != 0:
            raise ValueError("gas kind 'none' requires a zero reset rate")

    @property
    def tau_c(self) -> float:
        return math.inf if self.velocity_reset_rate == 0 else 1.0 / self.velocity_reset_rate


@dataclass
class AtomState:
    position: np.ndarray
    velocity: np.ndarray
    coherent: bool = True
    stream_id: int = 0
    seed: int = 0
    counter: int = 1
    gas_clock: float = math.nan


@dataclass
class Ensemble:
    """Struct-of-arrays atom ensemble.

    ``gas_clock`` holds the time left until each atom's next buffer-gas
    collision (NaN until a gas model first needs it).  ``death_time`` is the
    absolute time at which coherence was lost (``inf`` while coherent).
    """

    position: np.ndarray
    velocity: np.ndarray
    coherent: np.ndarray
    stream_id: np.ndarray
    seed: int
    counter: np.ndarray = None
    gas_clock: np.ndarray = None
    wall_hits: np.ndarray = None
    first_hit_time: np.ndarray = None
    death_time: np.ndarray = None
    time: float = 0.0
    key: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.position)
        if self.counter is None:
            self.counter = np.ones(n, dtype=np.uint64)
        if self.gas_clock is None:
            self.gas_clock = np.full(n, np.nan)
        if self.wall_hits is None:
            self.wall_hits = np.zeros(n, dtype=np.int64)
        if self.first_hit_time is None:
            self.first_hit_time = np.full(n, np.inf)
        if self.death_time is None:
            self.death_time = np.where(self.coherent, np.inf, self.time)
        if self.key is None:
            self.key = rng.stream_key(self.seed, self.stream_id)

    def __len__(self) -> int:
        return len(self.position)

    def __getitem__(self, i: int) -> AtomState:
        return AtomState(
            self.position[i].copy(),
            self.velocity[i].copy(),
            bool(self.coherent[i]),
            int(self.stream_id[i]),
            self.seed,
            int(self.counter[i]),
            float(self.gas_clock[i]),
        )

    def atoms(self) -> list[AtomState]:
        return [self[i] for i in range(len(self))]

    def copy(self) -> "Ensemble":
        return Ensemble(
            self.position.copy(),
            self.velocity.copy(),
            self.coherent.copy(),
            self.stream_id.copy(),
            self.seed,
            self.counter.copy(),
            self.gas_clock.copy(),
            self.wall_hits.copy(),
            self.first_hit_time.copy(),
            self.death_time.copy(),
            self.time,
            self.key.copy(),
        )

    def subset(self, index) -> "Ensemble":
        return Ensemble(
            self.position[index],
            self.velocity[index],
            self.coherent[index],
            self.stream_id[index],
            self.seed,
            self.counter[index],
            self.gas_clock[index],
            self.wall_hits[index],
            self.first_hit_time[index],
            self.death_time[index],
            self.time,
            self.key[index],
        )

    @classmethod
    def from_atoms(cls, atoms: list[AtomState], time: float = 0.0) -> "Ensemble":
        seeds = {a.seed for a in atoms}
        if len(seeds) != 1:
            raise ValueError("atoms must share one master seed")
        return cls(
            np.array([a.position for a in atoms], dtype=float).reshape(-1, 3),
            np.array([a.velocity for a in atoms], dtype=float).reshape(-1, 3),
            np.array([a.coherent for a in atoms], dtype=bool),
            np.array([a.stream_id for a in atoms], dtype=np.int64),
            seeds.pop(),
            counter=np.array([a.counter for a in atoms], dtype=np.uint64),
            gas_clock=np.array([a.gas_clock for a in atoms], dtype=float),
            time=time,
        )


def _sample_radius2(u: np.ndarray, cell_radius: float, beams: BeamGeometry | None,
                    positions: str) -> np.ndarray:
    r2max = cell_radius**2
    if positions == "uniform" or beams is None or math.isinf(beams.write_waist):
        return r2max * u
    w = beams.write_waist
    if beams.profile == "tophat":
        return min(w, cell_radius) ** 2 * u
    # intensity exp(-2 rho^2 / w^2) truncated at the wall: rho^2 is a truncated exponential
    scale = w**2 / 2
    return -scale * np.log1p(-u * -np.expm1(-r2max / scale))


def sample_ensemble(
    n: int,
    cell: CellGeometry,
    beams: BeamGeometry | None,
    thermal: ThermalConfig,
    seed: int,
    positions: Literal["write_profile", "uniform"] = "write_profile",
    stream_offset: int = 0,
) -> Ensemble:
    """Draw ``n`` coherent atoms with Maxwell-Boltzmann velocities.

    With ``positions="write_profile"`` the transverse density follows the
    write-beam intensity (clipped at the wall); ``"uniform"`` fills the
    cylinder uniformly.  Positions are always uniform along the axis.
    ``stream_offset`` lets a caller build disjoint pieces of one larger
    ensemble: atom ``i`` gets ``stream_id = stream_offset + i``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one atom")
    if positions not in ("write_profile", "uniform"):
        raise ValueError(f"unknown position sampling {positions!r}")
    sid = np.arange(stream_offset, stream_offset + n, dtype=np.int64)
    key = rng.stream_key(seed, sid)
    u_r, u_phi, u_z = (rng.uniform(key, 0, s) for s in _SLOT_POS)
    rho = np.sqrt(_sample_radius2(u_r, cell.radius, beams, positions))
    phi = 2 * math.pi * u_phi
    pos = np.empty((n, 3))
    pos[:, 0] = rho * np.cos(phi)
    pos[:, 1] = rho * np.sin(phi)
    pos[:, 2] = cell.length * (u_z - 0.5)
    vel = np.empty((n, 3))
    for axis, s in enumerate(_SLOT_VEL0):
        vel[:, axis] = thermal.sigma_v * rng.normal(key, 0, s)
    return Ensemble(pos, vel, np.ones(n, dtype=bool), sid, seed, key=key)


def _walls_of(cell: CellGeometry | None):
    if cell is None:
        return None
    wall = cell.wall_model if cell.wall_model is not None else WallModel()
    return None if wall.kind == "none" else wall


def _time_to_wall(pos, vel, length, radius):
    x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
    vx, vy, vz = vel[:, 0], vel[:, 1], vel[:, 2]
    a = vx * vx + vy * vy
    b = 2.0 * (x * vx + y * vy)
    c = x * x + y * y - radius * radius
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
        t_side = np.where(b < 0.0, (sq - b) / (2.0 * a), -2.0 * c / (b + sq))
        t_side = np.where(a > 0.0, t_side, np.inf)
        t_side = np.where(np.isnan(t_side), 0.0, t_side)
        half = 0.5 * length
        t_cap = np.where(vz > 0.0, (half - z) / vz, np.where(vz < 0.0, (-half - z) / vz, np.inf))
    t_side = np.maximum(t_side, 0.0)
    t_cap = np.maximum(t_cap, 0.0)
    on_side = t_side <= t_cap
    return np.where(on_side, t_side, t_cap), on_side


def _unstick_edges(pos, length, radius):
    """Move atoms sitting on the side-wall/end-cap rim inward by 1e-12 * radius."""
    rho = np.hypot(pos[:, 0], pos[:, 1])
    half = 0.5 * length
    edge = (rho >= radius * (1 - _EDGE_EPS)) & (np.abs(pos[:, 2]) >= half - _EDGE_EPS * radius)
    if edge.any():
        shrink = (radius * (1 - _EDGE_EPS)) / rho[edge]
        pos[edge, 0] *= shrink
        pos[edge, 1] *= shrink
        pos[edge, 2] = np.sign(pos[edge, 2]) * (half - _EDGE_EPS * radius)


def _reflect(pos, vel, on_side, key, ctr, wall: WallModel, sigma_v, length, radius):
    """Place atoms exactly on the wall they hit and give them inward velocities."""
    half = 0.5 * length
    rho = np.hypot(pos[:, 0], pos[:, 1])
    nx = np.where(on_side, pos[:, 0] / np.where(rho > 0, rho, 1.0), 0.0)
    ny = np.where(on_side, pos[:, 1] / np.where(rho > 0, rho, 1.0), 0.0)
    nz = np.where(on_side, 0.0, np.sign(pos[:, 2]))
    # snap onto the surface that was hit, clamp the other coordinate inside
    scale = np.where(on_side, radius / np.where(rho > 0, rho, 1.0),
                     np.minimum(1.0, radius / np.where(rho > 0, rho, 1.0)))
    pos[:, 0] *= scale
    pos[:, 1] *= scale
    pos[:, 2] = np.where(on_side, np.clip(pos[:, 2], -half, half), nz * half)

    if wall.reflection == "specular":
        vn = vel[:, 0] * nx + vel[:, 1] * ny + vel[:, 2] * nz
        vel[:, 0] -= 2 * vn * nx
        vel[:, 1] -= 2 * vn * ny
        vel[:, 2] -= 2 * vn * nz
    else:
        # flux-weighted Maxwellian: Rayleigh normal speed, gaussian tangential
        u_n = rng.uniform(key, ctr, _SLOT_EVT_VEL[0])
        g1 = rng.normal(key, ctr, _SLOT_EVT_VEL[1])
        g2 = rng.normal(key, ctr, _SLOT_EVT_VEL[2])
        v_in = sigma_v * np.sqrt(-2.0 * np.log(u_n))
        # tangents: side wall -> (azimuthal, z); end cap -> (x, y)
        t1x = np.where(on_side, -ny, 1.0)
        t1y = np.where(on_side, nx, 0.0)
        t2z = np.where(on_side, 1.0, 0.0)
        t2y = np.where(on_side, 0.0, 1.0)
        vel[:, 0] = -v_in * nx + sigma_v * g1 * t1x
        vel[:, 1] = -v_in * ny + sigma_v * (g1 * t1y + g2 * t2y)
        vel[:, 2] = -v_in * nz + sigma_v * g2 * t2z
    _unstick_edges(pos, length, radius)

    if wall.spin_destruction_prob >= 1.0:
        return np.ones(len(pos), dtype=bool)
    if wall.spin_destruction_prob <= 0.0:
        return np.zeros(len(pos), dtype=bool)
    return rng.uniform(key, ctr, _SLOT_EVT_SPIN) < wall.spin_destruction_prob


def advance(
    ens: Ensemble,
    duration: float,
    cell: CellGeometry | None,
    thermal: ThermalConfig,
    gas: GasModel | None = None,
    *,
    only_coherent: bool = False,
    trace=None,
) -> Ensemble:
    """Propagate every atom of ``ens`` in place by ``duration`` seconds.

    ``cell=None`` (or a wall of kind ``"none"``) gives free flight.  With
    ``only_coherent`` atoms that have already lost coherence are left where
    they are; their contribution to any spin-wave signal is zero anyway.
    ``trace``, if given, is called with the positions of the atoms that
    just had an event (for containment checks).
    """
    if duration < 0:
        raise ValueError("t_end must not precede t_start")
    gas = gas if gas is not None else GasModel()
    wall = _walls_of(cell)
    rate = gas.velocity_reset_rate
    sigma_v = thermal.sigma_v
    t0 = ens.time
    ens.time = t0 + duration
    if duration == 0 or len(ens) == 0:
        return ens

    idx = np.flatnonzero(ens.coherent) if only_coherent else np.arange(len(ens))
    if idx.size == 0:
        return ens

    if rate > 0:
        fresh = idx[np.isnan(ens.gas_clock[idx])]
        if fresh.size:
            u = rng.uniform(ens.key[fresh], 0, _SLOT_GAS0)
            ens.gas_clock[fresh] = -np.log(u) / rate
    else:
        ens.gas_clock[idx] = np.inf

    pos = ens.position[idx]
    vel = ens.velocity[idx]
    clock = ens.gas_clock[idx]
    ctr = ens.counter[idx]
    key = ens.key[idx]
    coherent = ens.coherent[idx]
    hits = ens.wall_hits[idx]
    first = ens.first_hit_time[idx]
    death = ens.death_time[idx]
    remaining = np.full(idx.size, float(duration))
    if wall is not None:
        _unstick_edges(pos, cell.length, cell.radius)

    bad = ~(np.all(np.isfinite(pos), axis=1) & np.all(np.isfinite(vel), axis=1))
    if bad.any():
        raise PropagationError("non-finite position or velocity",
                               int(ens.stream_id[idx[np.argmax(bad)]]))

    live = np.arange(idx.size)
    stalled = np.zeros(idx.size, dtype=np.int64)
    while live.size:
        p, v, rem, clk = pos[live], vel[live], remaining[live], clock[live]
        if wall is not None:
            t_wall, on_side = _time_to_wall(p, v, cell.length, cell.radius)
        else:
            t_wall = np.full(live.size, np.inf)
            on_side = np.zeros(live.size, dtype=bool)
        step = np.minimum(np.minimum(t_wall, clk), rem)
        if not np.all(np.isfinite(step)):
            bad = live[~np.isfinite(step)][0]
            raise PropagationError("non-finite step", int(ens.stream_id[idx[bad]]))
        p += v * step[:, None]
        hit_wall = (t_wall <= clk) & (t_wall <= rem)
        hit_gas = ~hit_wall & (clk <= rem)
        rem = rem - step
        clk = clk - step
        now = t0 + (duration - rem)

        if hit_wall.any():
            w = np.flatnonzero(hit_wall)
            wc = ctr[live[w]]
            pw, vw = p[w], v[w]
            lost = _reflect(pw, vw, on_side[w], key[live[w]], wc, wall, sigma_v,
                            cell.length, cell.radius)
            p[w], v[w] = pw, vw
            gw = live[w]
            hits[gw] += 1
            first[gw] = np.minimum(first[gw], now[w])
            newly = lost & coherent[gw]
            death[gw[newly]] = now[w][newly]
            coherent[gw] &= ~lost
            ctr[gw] += np.uint64(1)
            if trace is not None:
                trace(pw)
        if hit_gas.any():
            g = np.flatnonzero(hit_gas)
            gg = live[g]
            gc, gk = ctr[gg], key[gg]
            for axis, s in enumerate(_SLOT_EVT_VEL):
                v[g, axis] = sigma_v * rng.normal(gk, gc, s)
            clk[g] = -np.log(rng.uniform(gk, gc, _SLOT_EVT_GAS)) / rate
            ctr[gg] += np.uint64(1)
            if trace is not None:
                trace(p[g])

        pos[live], vel[live], remaining[live], clock[live] = p, v, rem, clk
        # zero-length flights should only happen transiently at the boundary
        stalled[live] = np.where(step > 0.0, 0, stalled[live] + 1)
        if stalled[live].max() > _MAX_STALLED_EVENTS:
            bad = live[np.argmax(stalled[live])]
            raise PropagationError("atom stuck on the boundary", int(ens.stream_id[idx[bad]]))
        live = live[rem > 0.0]

    ens.position[idx] = pos
    ens.velocity[idx] = vel
    ens.gas_clock[idx] = clock
    ens.counter[idx] = ctr
    ens.coherent[idx] = coherent
    ens.wall_hits[idx] = hits
    ens.first_hit_time[idx] = first
    ens.death_time[idx] = death
    return ens


def propagate(
    atom: AtomState,
    t_start: float,
    t_end: float,
    cell: CellGeometry | None,
    thermal: ThermalConfig,
    gas: GasModel | None = None,
) -> AtomState:
    """Advance a single atom from ``t_start`` to ``t_end`` (returns a new state)."""
    if t_end < t_start:
        raise ValueError("t_end must not precede t_start")
    ens = Ensemble.from_atoms([replace(atom)], time=t_start)
    advance(ens, t_end - t_start, cell, thermal, gas)
    return ens[0]


def mean_wall_collision_time(cell: CellGeometry, thermal: ThermalConfig) -> float:
    """Kinetic-theory mean time between wall hits, ``4V / (v_mean * S)``."""
    return 4 * cell.volume / (thermal.mean_speed * cell.surface)


def atom_collision_time_estimate(
    density: float, thermal: ThermalConfig, cross_section: float = 1e-17
) -> float:
    """Mean atom-atom collision time ``1 / (n sigma sqrt(2) v_mean)``.

    Returns ``inf`` (no collisions) for a zero density or cross section.
    """
    if density < 0 or cross_section < 0:
        raise ValueError("density and cross section must be non-negative")
    rate = density * cross_section * math.sqrt(2) * thermal.mean_speed
    return math.inf if rate == 0 else 1.0 / rate
