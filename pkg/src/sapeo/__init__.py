"""Surrogate-assisted partial-order based evolutionary optimisation."""

__version__ = "0.1.0"
