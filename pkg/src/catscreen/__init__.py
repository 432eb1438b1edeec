"""Constrained Bayesian optimization over point-cloud candidate pools."""

__version__ = "0.1.0"
