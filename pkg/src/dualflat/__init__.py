"""Dually flat geometry of convex generators.

Legendre duality, Bregman divergences, Hessian metrics with geodesic and
Hamiltonian integration, and geodesic projections onto affine submanifolds.
"""

from .divergence import (
    DivergencePair,
    QuadraticForm,
    bregman,
    conjugate_bregman,
    dual_bregman,
    dual_induced_metric,
    induced_metric,
    kl_discrete,
    local_quadratic,
    mixed_bregman,
)
from .dually_flat import (
    AffineSubmanifold,
    NonUniqueProjectionWarning,
    Triangle,
    dual_geodesic_projection,
    dual_segment,
    geodesic_projection,
    orthogonality_defect,
    primal_segment,
    projection_defects,
    pythagoras_residual,
)
from .errors import (
    ConvexityError,
    DegeneracyError,
    DomainError,
    DualFlatError,
    IntegrationError,
    InversionError,
    ProjectionError,
    SignatureError,
    UnreachableError,
    ValidationError,
)
from .families import FamilySpec, kl_oracle, log_partition, mean_to_natural, natural_to_mean
from .generator import DualCoords, GeneratorSpec, PrimalCoords, dual_value, from_dual, legendre_dual, to_dual
from .riemannian import (
    GeodesicSolution,
    HamiltonianSolution,
    MetricField,
    PhasePoint,
    TangentVector,
    arc_length,
    christoffel,
    classify_tangent,
    distance,
    geodesic_connect,
    geodesic_shoot,
    hamiltonian,
    hamiltonian_flow,
    metric_from_generator,
)

__version__ = "0.1.0"
