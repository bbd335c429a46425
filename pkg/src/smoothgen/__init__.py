"""Smoothness-based generalization prediction toolkit."""

__version__ = "0.1.0"
