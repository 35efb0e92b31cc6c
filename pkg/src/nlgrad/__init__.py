"""Nonlocal gradients built from differences of local gradients: operators, weight diagnostics, witnesses, solvers."""

from .errors import ConfigurationError, DomainError, NumericalError, ResolutionError
from .grid import DomainGrid, PairField, PairMask, ScalarField, VectorField, local_divergence, local_gradient
from .nlops import nltv, nonlocal_divergence, nonlocal_gradient, seminorm
from .solver import FidelityTerm, VariationalProblem, solve
from .weight import BoundarySingular, Constant, GaussianKernel, SeparableTheta, Tabulated, classify_embeddings

__version__ = "0.1.0"
