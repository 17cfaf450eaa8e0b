"""Causal effects of treatment by indication with imputed indication times."""

__version__ = "0.1.0"
