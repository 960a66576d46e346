"""Monte Carlo estimate of ionizing-radiation interaction rates in a superconducting-qubit chip."""

__version__ = "0.1.0"

from .particles import Particle  # noqa: E402
from .rng import GENERATOR_ID, make_stream  # noqa: E402

__all__ = ["GENERATOR_ID", "Particle", "__version__", "make_stream"]
