"""Discrete de Rham complex on voxel domains with mixed boundary conditions."""

__version__ = "0.1.0"
