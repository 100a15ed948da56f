"""Simulation and analysis of pulsed polarization-entangled photon-pair sources."""

__version__ = "0.1.0"
