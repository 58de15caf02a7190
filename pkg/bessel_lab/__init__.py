"""Simulation and verification lab for Bessel processes of dimension 0 < δ < 2."""

__version__ = "1.0.0"
