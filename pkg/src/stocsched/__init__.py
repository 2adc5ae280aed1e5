"""Stochastic single-server scheduling with abandonments."""

__version__ = "0.1.0"
