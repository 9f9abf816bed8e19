"""Per-batch unreliability detection and soft loss reweighting.

A sample whose loss exceeds its turn group's threshold ``mu + alpha * sigma``
is flagged: its loss is scaled by ``exp(-(l - tau) / tau)`` (floored at a
batch percentile of the candidate weights) and it is kept out of the running
statistics. Everything else gets weight 1 and is absorbed.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._backend import kernels
from .stats import StatsRegistry

# smallest positive weight ever emitted; exp() underflows for extreme outliers
MIN_WEIGHT = sys.float_info.min


class EmptyBatchError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class DegenerateThresholdError(ValueError):
    pass


@dataclass(frozen=True)
class ReweightConfig:
    alpha: float = 1.0
    floor_percentile: float = 5.0
    min_group_count: int = 16
    warmup_samples: int = 640
    ramp_steps: int = 100

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not 0 < self.floor_percentile < 100:
            raise ValueError("floor_percentile must lie in (0, 100)")
        if self.min_group_count < 2:
            raise ValueError("min_group_count must be >= 2")
        if self.warmup_samples < 0 or self.ramp_steps < 0:
            raise ValueError("warmup_samples and ramp_steps must be >= 0")


@dataclass(frozen=True)
class ReweightOutcome:
    weight: float
    flagged: bool
    absorbed: bool
    threshold: float
    adjusted_loss: float


@dataclass
class PhaseState:
    """Training-phase bookkeeping owned by one training loop."""

    samples_seen: int = 0
    post_warmup_steps: int = 0

    def in_warmup(self, config: ReweightConfig) -> bool:
        return self.samples_seen < config.warmup_samples

    def ramp(self, config: ReweightConfig) -> float:
        """Suppression strength in [0, 1] for the next post-warm-up step."""
        if config.ramp_steps == 0:
            return 1.0
        return min(1.0, self.post_warmup_steps / config.ramp_steps)


def raw_weight(loss: float, tau: float) -> float:
    """Decayed weight ``exp(-(loss - tau) / tau)`` before the floor."""
    if not tau > 0:
        raise DegenerateThresholdError(f"threshold must be > 0, got {tau!r}")
    return math.exp(-((loss - tau) / tau))


def batch_floor(candidate_weights: Sequence[float], percentile: float = 5.0) -> float:
    """Percentile of the batch's candidate weights (linear interpolation)."""
    w = np.asarray(candidate_weights, dtype=np.float64)
    if w.size == 0:
        raise EmptyBatchError("cannot take a percentile of an empty batch")
    return float(np.percentile(w, percentile, method="linear"))


def _as_losses(losses) -> np.ndarray:
    arr = np.ascontiguousarray(losses, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError("losses must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError("losses must be finite")
    if np.any(arr < 0):
        raise ValueError("losses must be non-negative")
    return arr


def reweight_arrays(
    registry: StatsRegistry,
    losses,
    groups,
    config: ReweightConfig,
    phase: PhaseState,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Array form of :func:`process_batch`.

    Returns ``(weights, flagged, absorbed, thresholds)``. Decisions use the
    statistics as they stood at the start of the batch; absorption happens
    afterwards, in batch order.
    """
    x = _as_losses(losses)
    if x.size == 0:
        raise EmptyBatchError("empty batch")
    if len(groups) != x.size:
        raise ShapeError(f"{x.size} losses but {len(groups)} group ids")
    offs = registry.offsets(groups)

    n = x.size
    tau = np.empty(n, dtype=np.float64)
    flags = np.zeros(n, dtype=np.uint8)
    cand = np.empty(n, dtype=np.float64)
    kernels.decide(
        x, offs, registry.counts, registry.means, registry.ssds,
        float(config.alpha), int(config.min_group_count), tau, flags, cand,
    )

    if phase.in_warmup(config):
        weights = np.ones(n)
        flagged = np.zeros(n, dtype=bool)
    else:
        flagged = flags.astype(bool)
        weights = np.ones(n)
        if flagged.any():
            floor = batch_floor(cand, config.floor_percentile)
            w = np.maximum(floor, cand[flagged])
            gamma = phase.ramp(config)
            if gamma < 1.0:
                w = (1.0 - gamma) + gamma * w
            weights[flagged] = np.maximum(w, MIN_WEIGHT)
        phase.post_warmup_steps += 1

    absorbed = ~flagged
    kernels.absorb_masked(
        registry.counts, registry.means, registry.ssds,
        x, offs, absorbed.astype(np.uint8),
    )
    phase.samples_seen += n
    return weights, flagged, absorbed, tau


def process_batch(
    registry: StatsRegistry,
    losses: Sequence[float],
    groups: Sequence[int],
    config: ReweightConfig,
    phase: PhaseState,
) -> list[ReweightOutcome]:
    x = _as_losses(losses)
    weights, flagged, absorbed, tau = reweight_arrays(registry, x, groups, config, phase)
    return [
        ReweightOutcome(
            weight=float(w),
            flagged=bool(f),
            absorbed=bool(a),
            threshold=float(t),
            adjusted_loss=float(w) * float(loss),
        )
        for w, f, a, t, loss in zip(weights, flagged, absorbed, tau, x)
    ]


def weighted_batch_loss(losses: Sequence[float], outcomes) -> float:
    """Mean of weight * loss over the batch.

    ``outcomes`` may be :class:`ReweightOutcome` records or plain weights.
    """
    x = np.asarray(losses, dtype=np.float64)
    w = np.asarray(
        [o.weight if isinstance(o, ReweightOutcome) else o for o in outcomes],
        dtype=np.float64,
    )
    if x.size == 0 or w.size == 0:
        raise EmptyBatchError("empty batch")
    if x.shape != w.shape:
        raise ShapeError(f"{x.size} losses but {w.size} weights")
    return float(np.mean(w * x))
