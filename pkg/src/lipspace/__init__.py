"""Weighted Sobolev/Besov machinery on Lipschitz graph domains.

Submodules
----------
geometry       graph and polygon domains, boundary quadrature, BMO functionals
flatten        Gagliardo extension and the flattening map with its inverse
spaces         weighted Lebesgue/Sobolev/Besov norms and Whitney remainders
whitney        Whitney-array calculus: traces, recursions, lifts, extension
halfspace_ops  weighted half-space integral operators and norm probing
green          half-space Green functions for the Laplacian and bilaplacian
solver         desk-scale Dirichlet solvers and well-posedness diagnostics
cli            the ``lipspace`` command line front end
"""

from .errors import (
    LipspaceError,
    DomainError,
    ResolutionError,
    NumericError,
    ParameterError,
)

__version__ = "0.1.0"

__all__ = [
    "LipspaceError",
    "DomainError",
    "ResolutionError",
    "NumericError",
    "ParameterError",
    "__version__",
]
