"""Stochastic mirror descent with adaptive Polyak-type stepsizes."""

__version__ = "0.1.0"
