"""eulerci: a desk-scale convex-integration engine for steady 3D Euler
flows on the torus, built around volume-preserving shear corrections."""

__version__ = "0.1.0"
