"""Explainable music emotion recognition through mid-level perceptual features."""

__version__ = "0.1.0"
