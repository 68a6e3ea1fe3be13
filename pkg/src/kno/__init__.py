"""Kinetic equation toolkit: classical solvers for the 1D BGK model and the
2D homogeneous Boltzmann equation (Maxwell molecules), plus a from-scratch
Fourier neural operator with optional conservation-penalty training."""

__version__ = "0.1.0"
