"""Numerical laboratory for holomorphic dynamics on P^2."""
__version__ = "0.1.0"
