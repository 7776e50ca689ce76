"""Closed-form decoherence factors (intensity, normalized to 1 at t = 0).

These are the oracles the Monte Carlo is checked against and the starting
points for fits.  Lifetime factors depend on the retrieval convention: the
collective (stimulated) signal goes as the square of the surviving fraction,
a single stored excitation as the fraction itself.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

__all__ = [
    "DecoherenceParams",
    "IntermediateRegimeWarning",
    "NARROWING_LIMIT",
    "ballistic_efficiency",
    "diffusive_efficiency",
    "lifetime_efficiency",
    "composite_efficiency",
    "diffusion_coefficient",
]

# trust the diffusive formula only below this value of dk * sigma_v * tau_c
NARROWING_LIMIT = 0.2


class IntermediateRegimeWarning(UserWarning):
    """Neither the ballistic nor the diffusive formula is reliable."""


@dataclass(frozen=True)
class DecoherenceParams:
    delta_k: float = 0.0
    sigma_v: float = 0.0
    tau_c: float = 0.0
    tau_s: float = math.inf
    convention: Literal["phased_array", "single_excitation"] = "phased_array"

    def __post_init__(self):
        if min(self.delta_k, self.sigma_v, self.tau_c, self.tau_s) < 0:
            raise ValueError("decoherence parameters must be non-negative")


def ballistic_efficiency(delta_k, sigma_v, t):
    """Gaussian-velocity dephasing, ``exp(-(dk sigma_v t)^2)``."""
    x = np.multiply(np.multiply(delta_k, sigma_v), t)
    return np.exp(-x * x)


def diffusion_coefficient(sigma_v, tau_c):
    """``D = sigma_v^2 tau_c`` for the strong-collision velocity-reset model."""
    return np.multiply(np.square(sigma_v), tau_c)


def diffusive_efficiency(delta_k, diffusion, t):
    """Motionally narrowed dephasing, ``exp(-2 D dk^2 t)``."""
    if np.any(np.asarray(diffusion) < 0):
        raise ValueError("diffusion coefficient must be non-negative")
    return np.exp(-2.0 * np.multiply(np.multiply(diffusion, np.square(delta_k)), t))


def lifetime_efficiency(tau_s, t, convention="phased_array"):
    if not tau_s > 0:
        raise ValueError("tau_s must be positive")
    rate = 0.0 if math.isinf(tau_s) else 1.0 / tau_s
    if convention == "phased_array":
        return np.exp(-2.0 * rate * np.asarray(t, dtype=float))
    if convention == "single_excitation":
        return np.exp(-rate * np.asarray(t, dtype=float))
    raise ValueError(f"unknown convention {convention!r}")


def composite_efficiency(params: DecoherenceParams, t):
    """Dephasing factor times lifetime factor.

    ``tau_c == 0`` selects the ballistic form.  Otherwise the diffusive form
    is used; if ``dk sigma_v tau_c >= 0.2`` an
    :class:`IntermediateRegimeWarning` is issued and the diffusive value is
    still returned.
    """
    if params.tau_c == 0:
        dephase = ballistic_efficiency(params.delta_k, params.sigma_v, t)
    else:
        product = params.delta_k * params.sigma_v * params.tau_c
        if product >= NARROWING_LIMIT:
            warnings.warn(
                f"dk*sigma_v*tau_c = {product:.3g} is outside the narrowing regime; "
                "the diffusive estimate is unreliable, use the Monte Carlo",
                IntermediateRegimeWarning,
                stacklevel=2,
            )
        d = diffusion_coefficient(params.sigma_v, params.tau_c)
        dephase = diffusive_efficiency(params.delta_k, d, t)
    return dephase * lifetime_efficiency(params.tau_s, t, params.convention)
