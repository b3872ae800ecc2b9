"""Spectral-Galerkin laboratory for the 1D stochastic viscous Burgers equation.

The package simulates the Burgers equation with additive trace-class noise on
the Dirichlet-Laplacian sine basis of (0, 1), and measures the strong and weak
errors induced by perturbing or truncating the noise covariance.  Monte Carlo
runs are driven by a counter-based random number generator so that coupled
experiments (different covariances, different Galerkin truncations) consume
literally the same underlying Brownian increments.
"""

from burgerslab.spectral import SpectralField, GridField
from burgerslab.covariance import DiagonalCovariance, DenseCovariance, DecayLaw
from burgerslab.noise import NoiseStream
from burgerslab.dynamics import SimConfig, DeterministicInitial, RandomSmoothInitial

__version__ = "0.1.0"

__all__ = [
    "SpectralField",
    "GridField",
    "DiagonalCovariance",
    "DenseCovariance",
    "DecayLaw",
    "NoiseStream",
    "SimConfig",
    "DeterministicInitial",
    "RandomSmoothInitial",
    "__version__",
]
