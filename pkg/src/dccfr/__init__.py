"""Data-center carbon/energy/cost co-optimization sandbox."""

__version__ = "0.1.0"
