"""Weighted Dirichlet forms with cone-singular weights on polar meshes.

Modules: :mod:`~sdlab.weights` (weights and integrability checks),
:mod:`~sdlab.mesh` (graded polar meshes and origin topologies),
:mod:`~sdlab.forms` (discrete forms, traces, jump functions),
:mod:`~sdlab.potential` (capacities, hitting probabilities, resolvent
identities), :mod:`~sdlab.stochastic` (Monte Carlo) and :mod:`~sdlab.cli`.
"""
from .errors import (
    AssemblyError,
    ConfigurationError,
    DomainError,
    InsufficientDataError,
    NumericalError,
    SDLError,
    UnsupportedPointError,
)
from .mesh import Mode, PolarMesh, Topology, build_mesh, build_topology, ladder_mesh
from .weights import Family, ProfileKind, RadialProfile, WeightSpec

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "ConfigurationError", "DomainError", "InsufficientDataError", "NumericalError",
    "SDLError", "UnsupportedPointError", "Mode", "PolarMesh", "Topology", "build_mesh", "build_topology",
    "ladder_mesh", "Family", "ProfileKind", "RadialProfile", "WeightSpec",
]
