"""Predictive analytics over object-centric event logs."""

__version__ = "0.1.0"
