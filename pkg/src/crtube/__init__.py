"""Curvature and flatness of Levi-degenerate tube hypersurfaces in C^3."""

__version__ = "0.1.0"
