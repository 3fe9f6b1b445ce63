"""Isoparametric trace finite elements for PDEs on level-set surfaces."""

from . import backends
from .assembly import AssembledSystem, StabConfig, assemble_a, assemble_constraint, assemble_rhs, assemble_s, assemble_system
from .levelset import Plane, Sphere, SphereBenchmark, Torus, TorusBenchmark, ZeroBenchmark, make_benchmark, shifted_plane
from .mapping import IsoMapping, SearchContext, build_theta, facet_jump_psi, normal_deviation, project_average, psi_h
from .mesh import ActiveMesh, MeshParams, enumerate_active
from .metrics import ErrorReport, compute_errors, eoc, estimate_condition
from .reference import DiscreteLevelSet, ReferenceElement, interpolate
from .solver import SolveReport, SolverDivergenceError, augment_gamma, pcg, solve_constrained

__version__ = "0.1.0"
__all__ = [
    "AssembledSystem",
    "ActiveMesh",
    "DiscreteLevelSet",
    "ErrorReport",
    "IsoMapping",
    "MeshParams",
    "Plane",
    "ReferenceElement",
    "SearchContext",
    "SolveReport",
    "Sphere",
    "SphereBenchmark",
    "StabConfig",
    "Torus",
    "TorusBenchmark",
    "ZeroBenchmark",
    "assemble_a",
    "assemble_constraint",
    "assemble_rhs",
    "assemble_s",
    "assemble_system",
    "augment_gamma",
    "backends",
    "build_theta",
    "compute_errors",
    "enumerate_active",
    "eoc",
    "estimate_condition",
    "facet_jump_psi",
    "interpolate",
    "make_benchmark",
    "normal_deviation",
    "pcg",
    "project_average",
    "psi_h",
    "shifted_plane",
    "solve_constrained",
    "SolverDivergenceError",
]
