"""Median quasi-state on the 2-sphere and the pointer-model measurement simulator."""

__version__ = "0.1.0"
