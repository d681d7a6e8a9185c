"""Spectral-pyramid graph attention for hyperspectral pixel classification, in numpy."""

__version__ = "0.1.0"
