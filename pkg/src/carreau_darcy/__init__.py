"""Two-level Newton solver for the nonlinear Darcy law of Carreau type."""

__version__ = "0.1.0"
