"""Generalized capital requirements: risk-aware dynamic programming on information states."""

__version__ = "0.1.0"
