"""Fully discrete approximation of a stochastic transport equation.

Backward Euler in time, discontinuous Petrov-Galerkin in space with the
optimal test space, truncated Karhunen-Loeve Matern noise with exact NIG
increments, plus a Monte Carlo convergence harness.
"""

from ._kernel import BACKEND as kernel_backend

__version__ = "0.1.0"
