"""Holonomy realization for saddle singularities of holomorphic vector fields."""

__version__ = "0.1.0"
