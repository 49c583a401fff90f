"""Explicit Lyapunov constructions and numerical checks for rapidly time-varying systems."""

__version__ = "0.1.0"
