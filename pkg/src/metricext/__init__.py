"""Regular extension operators for functions and (pseudo)metrics on finite metric spaces."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateInputError,
    DomainError,
    MetricExtError,
    PreconditionError,
    ValidationError,
)
from .extension import (
    ExtendedTable,
    ExtensionConfig,
    ExtensionOperator,
    ExtensionPipeline,
    GroupAction,
    build_operator,
    equivariant_extend,
    extend,
    extend_reference,
    near_isometric_extend,
)
from .nerve import AmbientSpace, Cover, NervePoint, borges_map_h, build_cover, partition_of_unity
from .sjoin import (
    FunctionTable,
    GroundSpace,
    Join,
    Leaf,
    base_weights,
    canonicalize,
    epsilon_net,
    magic_coefficients,
    magic_formula,
    sj_eval,
    support,
)
from .verify import (
    CheckResult,
    VerificationReport,
    check_locality,
    check_metric_positivity,
    check_net,
    check_pseudometric,
    check_regular_operator,
)

__all__ = [
    "AmbientSpace",
    "CheckResult",
    "ConfigError",
    "Cover",
    "DegenerateInputError",
    "DomainError",
    "ExtendedTable",
    "ExtensionConfig",
    "ExtensionOperator",
    "ExtensionPipeline",
    "FunctionTable",
    "GroundSpace",
    "GroupAction",
    "Join",
    "Leaf",
    "MetricExtError",
    "NervePoint",
    "PreconditionError",
    "ValidationError",
    "VerificationReport",
    "base_weights",
    "borges_map_h",
    "build_cover",
    "build_operator",
    "canonicalize",
    "check_locality",
    "check_metric_positivity",
    "check_net",
    "check_pseudometric",
    "check_regular_operator",
    "epsilon_net",
    "equivariant_extend",
    "extend",
    "extend_reference",
    "magic_coefficients",
    "magic_formula",
    "near_isometric_extend",
    "partition_of_unity",
    "sj_eval",
    "support",
]
