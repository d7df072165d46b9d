"""Numerical laboratory for waves on Schwarzschild and small quasilinear perturbations."""

__version__ = "0.1.0"
