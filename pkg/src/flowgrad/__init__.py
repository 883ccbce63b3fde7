"""Flows of smooth vector fields on a coordinatized 4-manifold and their referential gradients."""

from .charts import (
    ChartTransform,
    ConnectionCoeffs,
    Coordinates,
    MetricSpec,
    builtin_metric,
    christoffel_from_metric,
    transform_mixed,
    transform_point,
)
from .errors import FlowGradError
from .fields import (
    GeneratingField,
    ShiftVector,
    builtin_field,
    builtin_four_magnetic,
    covariant_gradient,
    magnitude,
    unit_field,
)
from .flow import FlowSolution, IntegratorConfig, check_tangent_relation, integrate_flow, reparametrize_arclength
from .laws import (
    GridSpec,
    ResidualReport,
    bch_combine,
    check_covariance,
    check_group_property,
    check_representation_relation,
    covariant_taylor_remainder,
    eulerian_residual,
)
from .refgrad import (
    RefGradient,
    SeriesTruncation,
    apply_to_shift,
    refgrad_finite_difference,
    refgrad_series,
    refgrad_variational,
)

__version__ = "0.1.0"

__all__ = [
    "ChartTransform",
    "ConnectionCoeffs",
    "Coordinates",
    "FlowGradError",
    "FlowSolution",
    "GeneratingField",
    "GridSpec",
    "IntegratorConfig",
    "MetricSpec",
    "RefGradient",
    "ResidualReport",
    "SeriesTruncation",
    "ShiftVector",
    "apply_to_shift",
    "bch_combine",
    "builtin_field",
    "builtin_four_magnetic",
    "builtin_metric",
    "check_covariance",
    "check_group_property",
    "check_representation_relation",
    "check_tangent_relation",
    "christoffel_from_metric",
    "covariant_gradient",
    "covariant_taylor_remainder",
    "eulerian_residual",
    "integrate_flow",
    "magnitude",
    "refgrad_finite_difference",
    "refgrad_series",
    "refgrad_variational",
    "reparametrize_arclength",
    "transform_mixed",
    "transform_point",
    "unit_field",
]
