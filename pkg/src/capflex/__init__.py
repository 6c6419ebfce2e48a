"""Convex-integration construction of a C^{1,alpha} isometric embedding of a spherical cap, with rigidity checks."""

__version__ = "0.1.0"
