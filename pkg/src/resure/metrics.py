"""Post-hoc summaries: rank correlation, detection quality, weight statistics."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

# explicit marker for a statistic that is mathematically undefined
UNDEFINED = None


class InputError(ValueError):
    pass


class JoinError(KeyError):
    pass


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Spearman rank correlation with average ranks for ties.

    Returns ``UNDEFINED`` when either rank vector is constant.
    """
    if len(xs) != len(ys):
        raise InputError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise InputError("spearman needs at least two points")
    rx = rankdata(xs, method="average")
    ry = rankdata(ys, method="average")
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0:
        return UNDEFINED
    return float(np.clip((rx * ry).sum() / denom, -1.0, 1.0))


@dataclass(frozen=True)
class DetectionMetrics:
    precision: float | None
    recall: float | None
    f1: float | None
    true_positives: int
    predicted_positives: int
    actual_positives: int


def detection_metrics(flags: Sequence[bool], truth: Sequence[bool]) -> DetectionMetrics:
    if len(flags) != len(truth):
        raise InputError(f"length mismatch: {len(flags)} vs {len(truth)}")
    f = np.asarray(flags, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    tp = int(np.sum(f & t))
    pp = int(f.sum())
    ap = int(t.sum())
    precision = tp / pp if pp else UNDEFINED
    recall = tp / ap if ap else UNDEFINED
    if precision is None or recall is None:
        f1 = UNDEFINED
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return DetectionMetrics(precision, recall, f1, tp, pp, ap)


@dataclass(frozen=True)
class WeightStats:
    count: int
    mean: float
    median: float
    p5: float
    p95: float


def _weight_stats(values: list[float]) -> WeightStats | None:
    if not values:
        return None
    v = np.asarray(values, dtype=np.float64)
    p5, median, p95 = np.percentile(v, [5, 50, 95])
    return WeightStats(len(v), float(v.mean()), float(median), float(p5), float(p95))


def weight_summary(
    step_log: Iterable[Mapping], truth: Mapping[str, bool]
) -> dict[int, dict[str, WeightStats | None]]:
    """Clean vs noisy weight statistics per epoch.

    ``step_log`` rows need ``sample_id``, ``epoch`` and ``weight``. A class
    with no samples in an epoch is reported as ``None``.
    """
    by_epoch: dict[int, dict[str, list[float]]] = defaultdict(lambda: {"clean": [], "noisy": []})
    seen = False
    for row in step_log:
        seen = True
        sid = row["sample_id"]
        if sid not in truth:
            raise JoinError(f"sample id {sid!r} missing from truth table")
        key = "noisy" if truth[sid] else "clean"
        by_epoch[int(row["epoch"])][key].append(float(row["weight"]))
    if not seen:
        raise InputError("empty step log")
    return {
        epoch: {k: _weight_stats(v) for k, v in classes.items()}
        for epoch, classes in sorted(by_epoch.items())
    }


def seed_spread(values: Sequence[float]) -> tuple[float, float]:
    """``(mean, sample std)``; std is 0 for a single value."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0
