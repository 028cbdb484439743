"""Exact-diagonalisation checks of equilibration and thermalisation theorems for small quantum lattice systems."""

__version__ = "0.1.0"
