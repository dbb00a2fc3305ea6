"""Galerkin-truncated stochastic 2D Navier-Stokes on the 2 pi-periodic torus.

Fourier-space fields, Ornstein-Uhlenbeck forcing, exponential and certified
Picard time stepping, and a seeded Monte Carlo harness for tail, escape and
spectrum estimates.
"""

from .forcing import NoiseSpec, OUState
from .integrator import CertificationError, NumericalError, StepParams, evolve, picard_solve, step_exponential
from .lattice import FieldError, NormParams, Truncation, VorticityField, d_norm, enstrophy, in_region_U, minimal_D
from .nonlinear import convolution_direct, convolution_fft
from .stats import EnsembleResult

__version__ = "0.1.0"
