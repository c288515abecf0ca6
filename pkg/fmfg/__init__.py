"""Pseudo-spectral solvers and verifiers for fractional mean field games on the torus."""

__version__ = "0.3.0"
