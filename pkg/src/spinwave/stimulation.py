"""Seeded-gain rate equation for the delayed stimulated Stokes onset.

The spin-wave excitation number obeys ``dn/dt = G (n + 1) - Gamma n`` with
``G = g P`` the Raman gain at write power ``P`` and ``Gamma`` the spin-wave
decay rate.  Stimulated emission sets in once ``n`` reaches a threshold; if
decay outpaces gain, ``n`` saturates at ``G / (Gamma - G)`` and may never get
there.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "RateParams",
    "excitation_number",
    "stimulation_delay",
    "delay_vs_power",
    "threshold_power",
    "calibrate_gain",
    "delays_to_csv",
]


@dataclass(frozen=True)
class RateParams:
    gain_per_watt: float
    write_power: float
    decay_rate: float
    threshold: float = 1e4

    def __post_init__(self):
        if min(self.gain_per_watt, self.write_power, self.decay_rate) < 0:
            raise ValueError("rate parameters must be non-negative")
        if self.threshold < 1:
            raise ValueError("threshold must be at least 1")

    @property
    def gain(self) -> float:
        return self.gain_per_watt * self.write_power


def _n(gain: float, decay: float, t):
    x = (gain - decay) * np.asarray(t, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(x == 0.0, 1.0, np.expm1(x) / np.where(x == 0.0, 1.0, x))
    return gain * np.asarray(t, dtype=float) * ratio


def excitation_number(params: RateParams, t):
    """``n(t) = G/(G - Gamma) (exp((G - Gamma) t) - 1)``, ``G t`` when equal."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    out = _n(params.gain, params.decay_rate, t)
    return float(out) if np.ndim(out) == 0 else out


def _delay(gain: float, decay: float, threshold: float) -> float | None:
    if gain <= 0:
        return None
    diff = gain - decay
    if diff == 0:
        return threshold / gain
    arg = threshold * diff / gain
    if arg <= -1.0:
        return None
    return math.log1p(arg) / diff


def stimulation_delay(params: RateParams) -> float | None:
    """First time ``n(t)`` reaches the threshold, or ``None`` if it never does."""
    return _delay(params.gain, params.decay_rate, params.threshold)


def threshold_power(gain_per_watt: float, decay_rate: float, threshold: float) -> float:
    """Power below which ``n`` saturates under the threshold."""
    return decay_rate / gain_per_watt * threshold / (threshold + 1)


def delay_vs_power(
    gain_per_watt: float,
    decay_rate: float,
    threshold: float,
    powers: Sequence[float],
    gain_table: tuple[Sequence[float], Sequence[float]] | Callable[[float], float] | None = None,
) -> list[tuple[float, float | None]]:
    """Onset delay at each write power.

    ``gain_table`` replaces the linear law ``G = g P``: either a callable
    or a ``(powers, gains)`` table interpolated linearly.
    """
    powers = [float(p) for p in powers]
    if any(p <= 0 for p in powers) or any(b <= a for a, b in zip(powers, powers[1:])):
        raise ValueError("powers must be positive and strictly ascending")
    if gain_table is None:
        gain_of = lambda p: gain_per_watt * p  # noqa: E731
    elif callable(gain_table):
        gain_of = gain_table
    else:
        tp, tg = (np.asarray(a, dtype=float) for a in gain_table)
        gain_of = lambda p: float(np.interp(p, tp, tg))  # noqa: E731
    return [(p, _delay(gain_of(p), decay_rate, threshold)) for p in powers]


def calibrate_gain(target_delay: float, power: float, decay_rate: float, threshold: float) -> float:
    """Gain per watt that puts the onset at ``target_delay`` for ``power``."""
    if not target_delay > 0:
        raise ValueError("target delay must be positive")
    lo = decay_rate * threshold / (threshold + 1) * (1 + 1e-12) + 1e-300
    hi = max(2 * lo, 1.0)
    while _delay(hi, decay_rate, threshold) > target_delay:
        hi *= 2
    gain = brentq(lambda g: _delay(g, decay_rate, threshold) - target_delay, lo, hi,
                  xtol=1e-12, rtol=1e-14, maxiter=500)
    return gain / power


def delays_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["power_w", "delay_s"])
    for p, d in rows:
        writer.writerow([f"{p:.17e}", "" if d is None else f"{d:.17e}"])
    return buf.getvalue()


def delays_from_csv(text: str) -> list[tuple[float, float | None]]:
    reader = csv.reader(io.StringIO(text))
    if next(reader) != ["power_w", "delay_s"]:
        raise ValueError("unexpected header")
    return [(float(p), float(d) if d else None) for p, d in reader]


def write_delays(rows, path: str | Path) -> None:
    Path(path).write_text(delays_to_csv(rows))
