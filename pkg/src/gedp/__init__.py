"""Confidentiality-preserving tabulations for establishment microdata.

Neighbor functions define which attribute values are indistinguishable;
mechanisms release noisy group-by sums under a composable Gaussian-style
budget; weighted least squares turns the answers back into consistent
record-level microdata.  Subpackages: ``numerics``, ``neighbor``,
``dataset``, ``accountant``, ``mechanisms``, ``microdata``, ``biassim``,
``syngen``, ``cli``.
"""

from .accountant import BudgetLedger, compose, group_privacy, heterogeneous_report
from .dataset import (
    CONFIDENTIAL_ATTRS,
    PUBLIC_ATTRS,
    Dataset,
    EstablishmentRecord,
    GroupBySumQuery,
    answer_exact,
    load_csv,
    write_csv,
)
from .errors import (
    BudgetError,
    GedpError,
    InputError,
    InvalidFunctionError,
    LoadError,
    MalformedFunctionError,
    SolverError,
)
from .mechanisms import (
    NoisyAnswer,
    estab_gaussian,
    estimate_log,
    estimate_sqrt,
    neighbor_mech,
    pnc_bounds,
    pnc_mech,
)
from .neighbor import (
    DistanceParams,
    Linear,
    LogShift,
    NeighborFunction,
    SqrtShift,
    Tabulated,
    combine_protection,
    compose_intersect,
    is_close,
    uncertainty_interval,
    validate,
)
from .neighbor import from_config as neighbor_from_config
from .numerics import RngStream, normal_cdf, normal_quantile

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "BudgetLedger",
    "CONFIDENTIAL_ATTRS",
    "Dataset",
    "DistanceParams",
    "EstablishmentRecord",
    "GedpError",
    "GroupBySumQuery",
    "InputError",
    "InvalidFunctionError",
    "Linear",
    "LoadError",
    "LogShift",
    "MalformedFunctionError",
    "NeighborFunction",
    "NoisyAnswer",
    "PUBLIC_ATTRS",
    "RngStream",
    "SolverError",
    "SqrtShift",
    "Tabulated",
    "answer_exact",
    "combine_protection",
    "compose",
    "compose_intersect",
    "estab_gaussian",
    "estimate_log",
    "estimate_sqrt",
    "group_privacy",
    "heterogeneous_report",
    "is_close",
    "load_csv",
    "neighbor_from_config",
    "neighbor_mech",
    "normal_cdf",
    "normal_quantile",
    "pnc_bounds",
    "pnc_mech",
    "uncertainty_interval",
    "validate",
    "write_csv",
]
