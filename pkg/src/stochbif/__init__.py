"""Stochastic Galerkin tools for bifurcating problems with random parameters.

Modules
-------
pcbasis    orthogonal polynomial chaos bases, quadrature and moment tensors
klexp      Karhunen-Loeve expansions of random parameters and fields
pitchfork  Galerkin solver for the pitchfork normal form
mesh, fem  channel meshes and Taylor-Hood Q2-Q1 operators
nssolve    deterministic Navier-Stokes Newton solves and continuation
ssfem      coupled stochastic Galerkin Navier-Stokes solver
mc         Monte Carlo ensembles of deterministic solves
uq_stats   sampling, kernel density estimates, extrema and peaks
cli        batch command line
"""
from .pcbasis import Family, PCBasis, MomentTensors, build_moment_tensors
from .klexp import KLExpansion, scalar_kl, uniform_kl, nystrom_kl
from .diagram import BifurcationDiagram, DiagramRecord

__version__ = "0.1.0"

__all__ = ["Family", "PCBasis", "MomentTensors", "build_moment_tensors", "KLExpansion",
           "scalar_kl", "uniform_kl", "nystrom_kl", "BifurcationDiagram", "DiagramRecord"]
