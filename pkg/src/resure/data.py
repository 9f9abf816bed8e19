"""Synthetic supervised data with turn-group structure and injected label noise.

Ground-truth rules are derived from ``TaskSpec.rule_seed`` only, so training
tiers and evaluation sets generated with different sample seeds share the
same labelling rule.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

_EPS = 1e-9


class ConfigError(ValueError):
    pass


class InvalidRecordError(ValueError):
    pass


class Tier(str, enum.Enum):
    HIGH = "High"
    NORMAL = "Normal"
    LOW = "Low"


TIER_CODES = {"H": Tier.HIGH, "N": Tier.NORMAL, "L": Tier.LOW}


class Task(str, enum.Enum):
    PRIMARY = "Primary"
    DRIFT = "Drift"


class Corruption(str, enum.Enum):
    LABEL_FLIP = "label_flip"
    LABEL_SHUFFLE = "label_shuffle"
    TARGET_JITTER = "target_jitter"


@dataclass(frozen=True)
class Sample:
    id: str
    features: tuple[float, ...]
    label: int | float
    group: int
    is_noisy: bool = False
    tier: Tier = Tier.HIGH
    task: Task = Task.PRIMARY


@dataclass(frozen=True)
class DialogueRecord:
    turns: tuple[tuple[str, str], ...]
    supervised: tuple[bool, ...]

    def __post_init__(self):
        if len(self.turns) != len(self.supervised):
            raise InvalidRecordError(
                f"{len(self.turns)} turns but {len(self.supervised)} mask entries"
            )
        if not any(self.supervised):
            raise InvalidRecordError("dialogue has no supervised turn")


def turn_group(dialogue: DialogueRecord) -> int:
    """1-based index of the last supervised turn."""
    for i in range(len(dialogue.supervised) - 1, -1, -1):
        if dialogue.supervised[i]:
            return i + 1
    raise InvalidRecordError("dialogue has no supervised turn")


@dataclass(frozen=True)
class TaskSpec:
    """Generator parameters for one synthetic task."""

    kind: str = "classification"
    dim: int = 32
    num_classes: int = 4
    num_groups: int = 4
    # minimum gap between the top two class scores (classification)
    margin: float = 0.25
    # observed-feature noise std grows by this much per turn group
    group_feature_noise: float = 0.15
    group_probs: tuple[float, ...] | None = None
    residual_std: float = 0.1
    clean_accuracy: float = 0.8
    rule_seed: int = 0
    input_shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("classification", "regression"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.num_groups < 1:
            raise ConfigError("num_groups must be >= 1")
        if self.kind == "classification" and self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.group_probs is not None:
            p = np.asarray(self.group_probs, dtype=float)
            if p.size != self.num_groups or np.any(p < 0) or not math.isclose(p.sum(), 1.0):
                raise ConfigError("group_probs must be a distribution over num_groups")

    @property
    def outputs(self) -> int:
        return self.num_classes if self.kind == "classification" else 1

    def rule(self) -> tuple[np.ndarray, np.ndarray]:
        """``(weights, shift_direction)`` of the ground-truth rule."""
        rng = np.random.default_rng(self.rule_seed)
        if self.kind == "classification":
            w = rng.standard_normal((self.num_classes, self.dim))
            w /= np.linalg.norm(w, axis=1, keepdims=True)
        else:
            w = rng.standard_normal((1, self.dim)) / math.sqrt(self.dim)
        u = rng.standard_normal(self.dim)
        u /= np.linalg.norm(u)
        return w, u

    def group_noise(self, group: int) -> float:
        return self.group_feature_noise * (group - 1)


def true_predict(task: TaskSpec, features: np.ndarray) -> np.ndarray:
    """Apply the generator's own rule to a feature matrix."""
    w, _ = task.rule()
    scores = np.atleast_2d(features) @ w.T
    if task.kind == "classification":
        return np.argmax(scores, axis=1)
    return scores[:, 0]


def generate(
    task: TaskSpec,
    count: int,
    seed: int,
    *,
    id_prefix: str = "s",
    tier: Tier = Tier.HIGH,
    task_kind: Task = Task.PRIMARY,
) -> list[Sample]:
    if count <= 0:
        raise ConfigError(f"count must be > 0, got {count}")
    rng = np.random.default_rng(seed)
    w, u = task.rule()

    if task.kind == "classification":
        accepted = []
        need = count
        while need > 0:
            x = rng.standard_normal((2 * need + 16, task.dim)) + task.input_shift * u
            s = np.sort(x @ w.T, axis=1)
            x = x[s[:, -1] - s[:, -2] >= task.margin]
            accepted.append(x[:need])
            need -= len(accepted[-1])
        clean = np.concatenate(accepted)
        labels = np.argmax(clean @ w.T, axis=1).tolist()
    else:
        clean = rng.standard_normal((count, task.dim)) + task.input_shift * u
        labels = (clean @ w[0] + task.residual_std * rng.standard_normal(count)).tolist()

    groups = rng.choice(
        np.arange(1, task.num_groups + 1), size=count, p=task.group_probs
    )
    scale = task.group_feature_noise * (groups - 1)
    observed = clean + scale[:, None] * rng.standard_normal(clean.shape)

    width = max(6, len(str(count)))
    return [
        Sample(
            id=f"{id_prefix}{i:0{width}d}",
            features=tuple(float(v) for v in observed[i]),
            label=int(labels[i]) if task.kind == "classification" else float(labels[i]),
            group=int(groups[i]),
            tier=tier,
            task=task_kind,
        )
        for i in range(count)
    ]


@dataclass(frozen=True)
class NoiseSpec:
    per_group_rates: Mapping[int, float] = field(default_factory=dict)
    corruption: Corruption = Corruption.LABEL_FLIP
    jitter_sigma: float = 1.0

    def __post_init__(self):
        for g, r in self.per_group_rates.items():
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"noise rate for group {g} must lie in [0, 1], got {r}")
        if self.jitter_sigma <= 0:
            raise ConfigError("jitter_sigma must be > 0")


def tier_rates(rate: float, num_groups: int) -> dict[int, float]:
    """Per-group noise profile whose group-average equals ``rate``.

    Later groups get proportionally more noise (rate * 2b / (N + 1)),
    clipped to 1.
    """
    return {
        b: min(1.0, rate * 2.0 * b / (num_groups + 1)) for b in range(1, num_groups + 1)
    }


def inject_noise(
    data: Sequence[Sample],
    spec: NoiseSpec,
    seed: int,
    num_classes: int | None = None,
) -> list[Sample]:
    """Corrupt exactly floor(rate_b * count_b) samples of each group b."""
    rng = np.random.default_rng(seed)
    out = list(data)
    if num_classes is None and spec.corruption != Corruption.TARGET_JITTER:
        num_classes = max(2, max((int(s.label) for s in data), default=0) + 1)

    mapping = None
    if spec.corruption == Corruption.LABEL_SHUFFLE:
        # fixed derangement of class ids: p[i] -> p[i + 1]
        p = rng.permutation(num_classes)
        mapping = {int(p[i]): int(p[(i + 1) % num_classes]) for i in range(num_classes)}

    for group in sorted(spec.per_group_rates):
        rate = spec.per_group_rates[group]
        members = [i for i, s in enumerate(data) if s.group == group]
        k = int(math.floor(rate * len(members) + _EPS))
        if k == 0:
            continue
        chosen = rng.permutation(len(members))[:k]
        for j in sorted(chosen):
            i = members[j]
            s = out[i]
            if spec.corruption == Corruption.LABEL_FLIP:
                label = (int(s.label) + int(rng.integers(1, num_classes))) % num_classes
            elif spec.corruption == Corruption.LABEL_SHUFFLE:
                label = mapping[int(s.label)]
            else:
                delta = spec.jitter_sigma * float(rng.standard_normal())
                label = float(s.label) + (delta if delta != 0.0 else spec.jitter_sigma)
            out[i] = replace(s, label=label, is_noisy=True)
    return out


def mix(tiers: Sequence[tuple[Sequence[Sample], Tier]], shuffle_seed: int) -> list[Sample]:
    """Concatenate tiers, stamp each sample's tier, shuffle deterministically."""
    if not tiers:
        raise ConfigError("mix needs at least one tier")
    pooled = [replace(s, tier=Tier(t)) for samples, t in tiers for s in samples]
    order = np.random.default_rng(shuffle_seed).permutation(len(pooled))
    return [pooled[i] for i in order]


def prefilter(
    data: Sequence[Sample],
    proxy_score: Callable[[Sample], float] | Sequence[float],
    keep_fraction: float,
) -> list[Sample]:
    """Keep the ceil(keep_fraction * n) highest-scoring samples.

    Ties are broken by id. Kept samples are returned in their input order.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ConfigError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    if callable(proxy_score):
        scores = [float(proxy_score(s)) for s in data]
    else:
        scores = [float(v) for v in proxy_score]
        if len(scores) != len(data):
            raise ConfigError("one proxy score per sample is required")
    keep = int(math.ceil(keep_fraction * len(data) - _EPS))
    ranked = sorted(range(len(data)), key=lambda i: (-scores[i], data[i].id))
    kept = set(ranked[:keep])
    return [s for i, s in enumerate(data) if i in kept]


def parse_mixture(name: str) -> list[Tier]:
    """``"H+N+L"`` -> [High, Normal, Low]."""
    try:
        return [TIER_CODES[p.strip()] for p in name.split("+")]
    except KeyError as exc:
        raise ConfigError(f"unknown tier code {exc.args[0]!r} in mixture {name!r}") from None


def to_arrays(data: Sequence[Sample]):
    """Stack samples into ``(X, y, groups)`` arrays."""
    if not data:
        raise ConfigError("empty dataset")
    x = np.asarray([s.features for s in data], dtype=np.float64)
    if isinstance(data[0].label, int) and not isinstance(data[0].label, bool):
        y = np.asarray([s.label for s in data], dtype=np.int64)
    else:
        y = np.asarray([s.label for s in data], dtype=np.float64)
    groups = np.asarray([s.group for s in data], dtype=np.int64)
    return x, y, groups
