"""Numerics for the two-dimensional cubic-quintic nonlinear Schroedinger equation at the ground-state mass threshold."""

__version__ = "0.1.0"
