"""Per-turn-group loss statistics with soft reweighting of unreliable samples.

The numerical kernels come from a compiled extension when it was built and
from a pure-Python module otherwise; ``resure._backend.BACKEND`` says which.
"""
from ._backend import BACKEND
from .reweight import ReweightConfig, process_batch, weighted_batch_loss
from .stats import GroupStats, StatsRegistry, absorb

__all__ = [
    "BACKEND",
    "GroupStats",
    "ReweightConfig",
    "StatsRegistry",
    "absorb",
    "process_batch",
    "weighted_batch_loss",
]
