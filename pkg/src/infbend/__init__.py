"""Infinitesimal bendings of rank-two hypersurfaces sampled on finite-difference grids."""

__version__ = "0.1.0"
