"""Counterfactual rear-end crash generation and delta-v validation toolkit."""

__version__ = "0.1.0"
