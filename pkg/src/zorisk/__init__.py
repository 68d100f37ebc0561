"""Zeroth-order optimization of convex mean-semideviation risk objectives."""

from .core import ConfigError, FeasibleRegion, RandomStreams, RiskProfile, RiskSpec

__version__ = "0.1.0"

__all__ = ["ConfigError", "FeasibleRegion", "RandomStreams", "RiskProfile", "RiskSpec", "__version__"]
