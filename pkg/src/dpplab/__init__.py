"""Numerical laboratory for discrete determinantal point processes."""

__version__ = "0.1.0"
