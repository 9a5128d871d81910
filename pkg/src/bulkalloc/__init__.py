"""ML-assisted bulk resource allocation: channel simulation, GTBA, RBOL training, reliability analysis."""

from .channel_sim import SimConfig, derive_stream, generate_realization, generate_realizations
from .gtba import GtbaConfig, GtbaDecision, Outcome, allocate, select_top_d
from .losses import RbolConfig, baseline_loss, rbol
from .reliability import ReliabilityReport, binomial_obop, decomposition_audit, evaluate

__version__ = "0.1.0"

__all__ = [
    "GtbaConfig",
    "GtbaDecision",
    "Outcome",
    "RbolConfig",
    "ReliabilityReport",
    "SimConfig",
    "allocate",
    "baseline_loss",
    "binomial_obop",
    "decomposition_audit",
    "derive_stream",
    "evaluate",
    "generate_realization",
    "generate_realizations",
    "rbol",
    "select_top_d",
]
