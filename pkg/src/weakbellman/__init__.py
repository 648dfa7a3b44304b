"""Bellman-function toolkit for weighted weak-type estimates of dyadic martingale transforms."""

__version__ = "0.1.0"
