"""Embedded eigenvalues of one-dimensional Schroedinger operators with decaying
oscillatory potentials: exact resonance coefficients, potential construction,
Pruefer integration and asymptotic verification."""

from .errors import (
    BracketFailure,
    EmbeddedEigenError,
    Infeasible,
    NonConvergence,
    NonGeneric,
    NotFound,
    NotInSpSetminus,
    StepFailure,
    WindowTooShort,
)
from .phase_sets import PhaseSet, ResonanceSet, build_resonance_set, is_new_at_order
from .potential import ConstructionPlan, CosineTerm, PotentialSpec, plan_construction

__version__ = "0.1.0"

__all__ = [
    "BracketFailure",
    "ConstructionPlan",
    "CosineTerm",
    "EmbeddedEigenError",
    "Infeasible",
    "NonConvergence",
    "NonGeneric",
    "NotFound",
    "NotInSpSetminus",
    "PhaseSet",
    "PotentialSpec",
    "ResonanceSet",
    "StepFailure",
    "WindowTooShort",
    "build_resonance_set",
    "is_new_at_order",
    "plan_construction",
    "__version__",
]
