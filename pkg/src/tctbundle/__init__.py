"""Per-bundle Poisson inversion for temporal CT detector bundles."""
__version__ = "0.1.0"
