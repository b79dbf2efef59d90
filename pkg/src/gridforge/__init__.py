"""Robust day-ahead co-optimisation of data-center compute load and co-located storage."""
__version__ = "0.1.0"
