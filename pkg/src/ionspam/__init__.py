"""Simulation of state preparation and measurement for a 133Ba+ hyperfine qubit."""

__version__ = "0.1.0"
