"""Numerical parametrix construction of Lévy-type transition densities."""

__version__ = "0.1.0"
