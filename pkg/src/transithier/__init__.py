"""Macroscopic multimodal transit hierarchy from trip-chain records."""

__version__ = "0.1.0"

from .hierarchy import (  # noqa: E402
    HierarchyConfig,
    HierarchyResult,
    ModeScores,
    PhaseCounts,
    Ranking,
    accumulate,
    analyze_counts,
    hierarchy_distances,
    merge,
    overall_hierarchy,
    phase_scores,
    rank_modes,
    transfer_rates,
)
from .model import (  # noqa: E402
    SEOUL_MODES,
    Leg,
    Mode,
    ModeRegistry,
    Phase,
    Transfer,
    TripChain,
    classify_transfers,
    validate_chain,
)
