"""Finite-dimensional (affine) realizations of Levy-driven semilinear SPDEs:
decide whether one exists, build it, simulate it, and verify it against an
independent full-resolution solver."""

from .errors import AffineSpdeError
from .funalg import QExpFunction, parse_qexp, serialize
from .levy import LevySpec, make_levy_spec, sample_increments
from .operators import EigenExpansion, RayBundle, eigenpairs
from .realization import (
    GridSpace,
    ModalSpace,
    ProfileRaySpace,
    Subspace,
    build_realization,
    check_invariant,
    invariant_span,
    reconstruct,
    semiinvariant_correction,
    simulate_coordinates,
    simulate_ensemble,
    solve_psi,
    split_initial,
)

__version__ = "0.1.0"

__all__ = [
    "AffineSpdeError",
    "QExpFunction",
    "parse_qexp",
    "serialize",
    "LevySpec",
    "make_levy_spec",
    "sample_increments",
    "EigenExpansion",
    "RayBundle",
    "eigenpairs",
    "GridSpace",
    "ModalSpace",
    "ProfileRaySpace",
    "Subspace",
    "build_realization",
    "check_invariant",
    "invariant_span",
    "reconstruct",
    "semiinvariant_correction",
    "simulate_coordinates",
    "simulate_ensemble",
    "solve_psi",
    "split_initial",
    "__version__",
]
