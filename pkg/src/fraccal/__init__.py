"""Numerical laboratory for the finite-dimensional fractional Calderón problem in 1D."""

__version__ = "0.1.0"
