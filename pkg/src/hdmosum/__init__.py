"""High-dimensional MOSUM change-point detection.

The pipeline runs panel ingestion, robust long-run scaling, moving-sum
jump profiles, Gaussian-limit threshold calibration and iterative peak
extraction, in the global (all series) or Two-Way (series neighborhoods)
form.
"""

from .detect import Break, DetectionResult, detect_global, detect_twoway, estimate_jump
from .exceptions import (
    ConfigError,
    DataValidationError,
    HDMosumError,
    NumericalError,
    ParseError,
)
from .lrv import LongRunEstimate, estimate_lrv, known_lrv
from .mosum import MosumProfile, StatProfile, jump_profile, resolve_bn, stat_global, stat_twoway
from .neighborhoods import (
    Neighborhood,
    NeighborhoodSet,
    WindowRef,
    enumerate_contiguous,
    enumerate_rectangles,
    from_intervals,
)
from .nulllimit import (
    LimitCovariance,
    ThresholdResult,
    cov_dependent,
    cov_global,
    cov_twoway,
    sample_max,
    threshold,
)
from .panel import Panel, SpatialLayout, load_panel_csv

__version__ = "0.1.0"

__all__ = [
    "Break",
    "ConfigError",
    "DataValidationError",
    "DetectionResult",
    "HDMosumError",
    "LimitCovariance",
    "LongRunEstimate",
    "MosumProfile",
    "Neighborhood",
    "NeighborhoodSet",
    "NumericalError",
    "Panel",
    "ParseError",
    "SpatialLayout",
    "StatProfile",
    "ThresholdResult",
    "WindowRef",
    "cov_dependent",
    "cov_global",
    "cov_twoway",
    "detect_global",
    "detect_twoway",
    "enumerate_contiguous",
    "enumerate_rectangles",
    "estimate_jump",
    "estimate_lrv",
    "from_intervals",
    "jump_profile",
    "known_lrv",
    "load_panel_csv",
    "resolve_bn",
    "sample_max",
    "stat_global",
    "stat_twoway",
    "threshold",
]
