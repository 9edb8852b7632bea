"""Change point detection through the dual solution path of trend filtering."""

from .detect import (
    DetectionResult,
    detect_mprutf,
    detect_prutf,
    is_staircase,
    pattern_diagnostics,
    segment_polynomial_fit,
    to_primal_changepoints,
)
from .errors import (
    CapExceededError,
    DegenerateScaleError,
    GramFactorError,
    PrutfError,
    SignalTooShortError,
)
from .linop import DifferenceOperator, build_difference_operator
from .path import PathEvent, PathState, SolutionPath, solution_path
from .stopping import StoppingConfig, estimate_sigma_mad, excursion_prob, threshold_x_alpha

__version__ = "0.1.0"

__all__ = [
    "CapExceededError",
    "DegenerateScaleError",
    "DetectionResult",
    "DifferenceOperator",
    "GramFactorError",
    "PathEvent",
    "PathState",
    "PrutfError",
    "SignalTooShortError",
    "SolutionPath",
    "StoppingConfig",
    "build_difference_operator",
    "detect_mprutf",
    "detect_prutf",
    "estimate_sigma_mad",
    "excursion_prob",
    "is_staircase",
    "pattern_diagnostics",
    "segment_polynomial_fit",
    "solution_path",
    "threshold_x_alpha",
    "to_primal_changepoints",
]
