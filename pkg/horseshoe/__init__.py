"""Heteroclinic bifurcation toolkit: implicit affine-like calculus, rectangle classes, transverse dimension."""

__version__ = "1.0.0"
