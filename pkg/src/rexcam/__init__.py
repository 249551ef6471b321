"""Spatio-temporal camera pruning for cross-camera identity tracking, simulated."""

__version__ = "0.1.0"
