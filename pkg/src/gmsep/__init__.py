"""Low-rank plus filtered-sparse separation by (preconditioned) ADMM."""
from .errors import (
    ConvergenceError,
    DataError,
    DegenerateFilterError,
    FormatError,
    GMSError,
    InvalidParameterError,
    ShapeError,
    UndefinedMetricError,
)
from .filters import BlockCirculantFilter, BlockFilter, CirculantFilter, DenseFilter, SeparableFilter
from .lasso import LassoConfig, LassoState
from .numerics import rel_err, singular_value_threshold, soft_threshold
from .separation import (
    ConvergenceTrace,
    SeparationResult,
    SolverConfig,
    gms,
    gts,
    pgms,
    pgts,
    precondition_filter,
    recover_low_rank,
)

__version__ = "0.1.0"
