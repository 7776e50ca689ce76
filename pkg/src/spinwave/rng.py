"""Counter-based random numbers, one independent stream per atom.

Every draw is a pure function of ``(seed, stream_id, counter, slot)``, so an
atom's trajectory does not depend on how atoms are batched, ordered or
distributed across threads.  The mixing function is the SplitMix64 finalizer
applied to a Weyl-sequence combination of the four keys.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["uniform", "normal", "stream_key"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SLOT = np.uint64(0xD1B54A32D192ED03)
_COUNTER = np.uint64(0x8CB92BA72F3D8DD7)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / float(1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_key(seed: int, stream_id) -> np.ndarray:
    """Per-atom 64-bit key derived from the master seed and stream index."""
    sid = np.atleast_1d(np.asarray(stream_id, dtype=np.uint64))
    base = _mix(np.array([seed % (1 << 64)], dtype=np.uint64) + _GOLDEN)
    return _mix(base ^ _mix((sid + np.uint64(1)) * _GOLDEN))


def uniform(key: np.ndarray, counter, slot: int) -> np.ndarray:
    """Uniform variates on the open interval (0, 1)."""
    ctr = np.atleast_1d(np.asarray(counter, dtype=np.uint64))
    offset = np.uint64(((slot + 1) * int(_SLOT)) % (1 << 64))
    z = key + ctr * _COUNTER + offset
    bits = _mix(_mix(z) ^ key)
    return ((bits >> _S11).astype(np.float64) + 0.5) * _INV53


def normal(key: np.ndarray, counter, slot: int) -> np.ndarray:
    """Standard normal variates by inverse-CDF transform (one uniform each)."""
    return ndtri(uniform(key, counter, slot))
