"""Anchored-island coverage model: sampling, exact formulas and Monte Carlo checks."""

__version__ = "0.1.0"
