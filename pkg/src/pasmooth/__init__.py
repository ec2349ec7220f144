"""Numerics for slowed-down pseudo-Anosov maps on a flat torus model."""

__version__ = "0.1.0"
