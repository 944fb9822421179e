"""Vector-valued Bayesian optimization with linear measurement operators."""

__version__ = "0.1.0"
