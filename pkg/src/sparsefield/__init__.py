"""Static block-sparse attention patterns and their receptive fields."""

from .errors import ConfigError, DomainError
from .patterns import (
    PRESETS,
    BlockMask,
    Family,
    PatternConfig,
    build_mask,
    render_mask,
    row_budget,
    sparsity,
)
from .graph import (
    UNREACHABLE,
    ReachabilityProfile,
    coverage_gaps,
    depth_growth_curve,
    reach_profile,
    shortest_depth,
)

__version__ = "0.1.0"

__all__ = [
    "PRESETS",
    "UNREACHABLE",
    "BlockMask",
    "ConfigError",
    "DomainError",
    "Family",
    "PatternConfig",
    "ReachabilityProfile",
    "build_mask",
    "coverage_gaps",
    "depth_growth_curve",
    "reach_profile",
    "render_mask",
    "row_budget",
    "shortest_depth",
    "sparsity",
]
