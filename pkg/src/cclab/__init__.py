"""Causal coding and decoding over feedback channels."""

__version__ = "0.1.0"
