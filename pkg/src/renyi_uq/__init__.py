"""Rényi-divergence ambiguity sets and robust bounds for risk-sensitive quantities."""

__version__ = "0.1.0"
