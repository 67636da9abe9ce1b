"""Numerical toolkit for conformal vortex dynamics on rough planar domains."""

__version__ = "0.1.0"
