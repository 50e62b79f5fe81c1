"""Quantum Fisher information for localising and resolving emitters in 3D.

The package computes quantum and classical Fisher information matrices for
one emitter, or two incoherent emitters, imaged through a paraxial beam.
Three independent routes are provided for the two-emitter case: closed
forms (Gaussian beam only), a six-vector subspace method that works for any
sampled PSF, and a finite-difference oracle that makes no use of either.
"""

from .beam_models import (
    BeamFactory,
    BeamSpec,
    OverlapData,
    WindowTooSmallError,
    gaussian_moments,
    gaussian_overlap,
    numeric_overlap,
    sample,
)
from .field_grid import (
    FieldGrid,
    GeneratorMoments,
    GridGeometry,
    GridMismatchError,
    apply_G,
    apply_px,
    apply_py,
    displace,
    inner,
    moments,
)
from .fisher import FisherMatrix
from .oracle import oracle_qfim, pure_state_qfim
from .single_emitter import (
    cfi_direct_gaussian,
    cfi_direct_numeric,
    gamma_localisation,
    lg_ratio_table,
    localisation_matrices,
    qfim_localisation,
)
from .two_emitter import (
    CoincidentStatesError,
    CompatibilityReport,
    TwoEmitterParams,
    closed_form_gaussian,
    compatibility,
    condition_check,
    limit_gaussian,
    subspace_qfim,
)

__version__ = "0.1.0"

__all__ = [
    "BeamFactory",
    "BeamSpec",
    "CoincidentStatesError",
    "CompatibilityReport",
    "FieldGrid",
    "FisherMatrix",
    "GeneratorMoments",
    "GridGeometry",
    "GridMismatchError",
    "OverlapData",
    "TwoEmitterParams",
    "WindowTooSmallError",
    "apply_G",
    "apply_px",
    "apply_py",
    "cfi_direct_gaussian",
    "cfi_direct_numeric",
    "closed_form_gaussian",
    "compatibility",
    "condition_check",
    "displace",
    "gamma_localisation",
    "gaussian_moments",
    "gaussian_overlap",
    "inner",
    "lg_ratio_table",
    "limit_gaussian",
    "localisation_matrices",
    "moments",
    "numeric_overlap",
    "oracle_qfim",
    "pure_state_qfim",
    "qfim_localisation",
    "sample",
    "subspace_qfim",
]
