"""Monte Carlo and analytic model of spin-wave coherence in atomic vapor cells."""

__version__ = "0.1.0"
