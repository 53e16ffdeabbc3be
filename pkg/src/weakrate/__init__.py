"""Weak-to-strong feature transfer: pipeline, theory estimators and rate sweeps."""

__version__ = "0.1.0"
