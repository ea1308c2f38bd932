"""Adiabatic gauge potential probes of quantum chaos in spin-1/2 chains."""

__version__ = "0.1.0"
