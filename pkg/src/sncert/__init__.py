"""Saddle-node certification from sampled vector fields."""

__version__ = "0.1.0"
