"""Simulation and analysis of two-photon time-bin interference experiments."""

__version__ = "0.1.0"
