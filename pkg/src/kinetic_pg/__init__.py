"""Inf-sup stable Petrov-Galerkin discretization of a kinetic Fokker-Planck equation."""

__version__ = "0.1.0"
