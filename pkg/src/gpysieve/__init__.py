"""Computational laboratory for the GPY sieve and its smoothed variant."""

__version__ = "0.1.0"
