"""Uniform sampling on non-convex domains with the BallWalk chain and
measure-preserving maps built from incompressible potential flows."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BlowUpError,
    ComputationError,
    ConfigError,
    ConvergenceError,
    EmptyDomainError,
    InputError,
    MorphwalkError,
    NumericError,
    ParseError,
    ResourceError,
    TopologyError,
    UnsupportedError,
    ValidationError,
)
from .geometry import (  # noqa: E402
    Ball,
    Box,
    Domain,
    FlowImage,
    LShape,
    Partition,
    Polyline2D,
    StarShaped,
    contains,
    diameter_estimate,
    iso_ratio_estimate,
    sample_uniform,
    set_distance,
    volume_mc,
)
from .potential import PotentialSpec, differentiate, laplacian, parse_expr  # noqa: E402
