"""Quasilinear capillary problems: operators, solvers and rigidity diagnostics."""

__version__ = "0.1.0"
