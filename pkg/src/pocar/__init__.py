"""Fairness-constrained policy optimisation via advantage regularisation."""

__version__ = "0.1.0"
