"""Grouped streaming loss statistics.

One Welford cell (count, mean, sum of squared deviations) per turn group.
Cells live in flat float64 arrays so the kernels can update a whole batch in
one call; :class:`GroupStats` is the immutable per-cell view.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from ._backend import kernels


class GroupIndexError(IndexError):
    """Turn-group index outside ``1..max_groups``."""


@dataclass(frozen=True)
class GroupStats:
    count: int = 0
    mean: float = 0.0
    ssd: float = 0.0

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.ssd / (self.count - 1)

    @property
    def stddev(self) -> float:
        return stddev(self)


def stddev(stats: GroupStats) -> float:
    """Sample standard deviation; 0 while fewer than two values were seen."""
    return kernels.stddev(stats.count, stats.ssd)


def threshold(stats: GroupStats, alpha: float) -> float:
    """Unreliability threshold ``mean + alpha * stddev``."""
    return stats.mean + alpha * stddev(stats)


def _check_loss(loss: float) -> float:
    loss = float(loss)
    if not math.isfinite(loss):
        raise ValueError(f"loss must be finite, got {loss!r}")
    if loss < 0.0:
        raise ValueError(f"loss must be non-negative, got {loss!r}")
    return loss


class StatsRegistry:
    """Welford cells for turn groups ``1..max_groups``."""

    def __init__(self, max_groups: int):
        if max_groups < 1:
            raise ValueError("max_groups must be >= 1")
        self.max_groups = int(max_groups)
        self.counts = np.zeros(self.max_groups, dtype=np.int64)
        self.means = np.zeros(self.max_groups, dtype=np.float64)
        self.ssds = np.zeros(self.max_groups, dtype=np.float64)

    def _offset(self, group: int) -> int:
        if isinstance(group, bool) or int(group) != group:
            raise GroupIndexError(f"group index must be an integer, got {group!r}")
        group = int(group)
        if not 1 <= group <= self.max_groups:
            raise GroupIndexError(
                f"group {group} outside 1..{self.max_groups}"
            )
        return group - 1

    def offsets(self, groups: Iterable[int]) -> np.ndarray:
        """Validate 1-based group ids and return 0-based cell offsets."""
        arr = np.asarray(groups if isinstance(groups, np.ndarray) else list(groups))
        if arr.dtype.kind not in "iu":
            if arr.dtype.kind != "f" or not np.all(arr == np.floor(arr)):
                raise GroupIndexError("group indices must be integers")
        arr = arr.astype(np.int64)
        bad = (arr < 1) | (arr > self.max_groups)
        if bad.any():
            raise GroupIndexError(
                f"group {int(arr[bad][0])} outside 1..{self.max_groups}"
            )
        return np.ascontiguousarray(arr - 1)

    def __getitem__(self, group: int) -> GroupStats:
        i = self._offset(group)
        return GroupStats(int(self.counts[i]), float(self.means[i]), float(self.ssds[i]))

    def __iter__(self) -> Iterator[tuple[int, GroupStats]]:
        for g in range(1, self.max_groups + 1):
            yield g, self[g]

    def copy(self) -> "StatsRegistry":
        other = StatsRegistry(self.max_groups)
        other.counts[:] = self.counts
        other.means[:] = self.means
        other.ssds[:] = self.ssds
        return other

    def absorb_many(self, group: int, losses: Iterable[float]) -> GroupStats:
        """Absorb a stream of losses into one group, in order."""
        i = self._offset(group)
        values = np.asarray([_check_loss(x) for x in losses], dtype=np.float64)
        n, m, s = kernels.absorb_stream(
            int(self.counts[i]), float(self.means[i]), float(self.ssds[i]), values
        )
        self.counts[i], self.means[i], self.ssds[i] = n, m, s
        return self[group]

    def snapshot(self) -> list[tuple[int, int, float, float]]:
        """``(group, count, mean, variance)`` rows for every cell."""
        return [(g, s.count, s.mean, s.variance) for g, s in self]


def absorb(registry: StatsRegistry, group: int, loss: float) -> GroupStats:
    """Fold one reliable loss into its group's cell and return the new cell."""
    return registry.absorb_many(group, [loss])
