"""Horizontal lifts of affine connections to the tangent bundle and the
geometry they induce on cross-sections, with randomized identity checks."""
from .expr import Expr, differentiate, equivalent, evaluate, simplify
from .dsl import parse_expression, parse_workspace, load_workspace, serialize_workspace
from .base import (
    Connection,
    Manifold,
    Tensor,
    VectorField,
    christoffel_from_metric,
    covariant_derivative,
    curvature,
    is_infinitesimal_affine,
    lie_derivative_connection,
    lie_derivative_tensor,
)
from .bundle import (
    bundle_covariant_derivative,
    bundle_curvature,
    horizontal_lift_connection,
    horizontal_lift_metric,
    horizontal_lift_vector,
    verify_lift_conditions,
    vertical_lift,
)
from .section import (
    adapted_frame,
    curvature_decomposition,
    gauss_decomposition,
    induced_connection,
    is_curvature_tangent,
    is_totally_geodesic,
    second_fundamental,
)
from .verifier import SuiteConfig, run_suite

__version__ = "0.1.0"
