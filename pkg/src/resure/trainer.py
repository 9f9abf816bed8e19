"""Desk-scale training loop wired to the reweighter."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import model as M
from ._backend import BACKEND
from .data import Sample, Task, Tier, prefilter, to_arrays
from .metrics import detection_metrics, weight_summary
from .reweight import PhaseState, ReweightConfig, reweight_arrays, weighted_batch_loss
from .stats import StatsRegistry

STRATEGIES = ("resure", "uniform", "hard_filter", "no_welford")
DEFAULT_LR = {"linear": 5e-2, "mlp": 2e-2}


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"non-finite parameters or losses at step {step}")
        self.step = step


class EmptyDataError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model: str = "linear"
    hidden_width: int = 32
    strategy: str = "resure"
    prefilter: float | None = None
    epochs: int = 3
    batch_size: int = 64
    grad_accum: int = 1
    # None selects the desk-scale default for the architecture
    lr: float | None = None
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    warmup_ratio: float = 0.01
    seed: int = 0
    eval_tolerance: float = 0.5
    probe_epochs: int = 3
    reweight: ReweightConfig = field(default_factory=ReweightConfig)

    def __post_init__(self):
        if self.model not in DEFAULT_LR:
            raise ValueError(f"unknown model {self.model!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("epochs, batch_size and grad_accum must be >= 1")
        if self.prefilter is not None and not 0 < self.prefilter <= 1:
            raise ValueError("prefilter keep fraction must lie in (0, 1]")

    @property
    def learning_rate(self) -> float:
        return DEFAULT_LR[self.model] if self.lr is None else self.lr

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunReport:
    config: dict
    steps: list[dict] = field(default_factory=list)
    snapshots: list[dict] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    params: M.ModelParams | None = None


def evaluate(params: M.ModelParams, data: Sequence[Sample], tolerance: float = 0.5):
    """Mean per-sample loss and accuracy (within-tolerance rate for regression)."""
    if not data:
        raise EmptyDataError("cannot evaluate on an empty set")
    x, y, _ = to_arrays(data)
    return _evaluate_arrays(params, x, y, tolerance)


def _evaluate_arrays(params, x, y, tolerance):
    loss = float(np.mean(M.losses(params, x, y)))
    pred = M.predict(params, x)
    if params.kind == "classification":
        acc = float(np.mean(pred == y))
    else:
        acc = float(np.mean(np.abs(pred - y) <= tolerance))
    return loss, acc


def _kind(data: Sequence[Sample]) -> str:
    label = data[0].label
    return "classification" if isinstance(label, (int, np.integer)) and not isinstance(label, bool) else "regression"


def _outputs(data: Sequence[Sample], eval_data: Sequence[Sample]) -> int:
    if _kind(data) == "regression":
        return 1
    return int(max(max(int(s.label) for s in data), max(int(s.label) for s in eval_data))) + 1


def warmup_indices(data: Sequence[Sample], count: int, rng: np.random.Generator) -> list[int]:
    """Up to ``count`` shuffled indices of clean-tier primary-task samples."""
    pool = [i for i, s in enumerate(data) if s.tier == Tier.HIGH and s.task == Task.PRIMARY]
    pool = [pool[i] for i in rng.permutation(len(pool))]
    return pool[:count]


def probe_scores(
    config: TrainConfig, data: Sequence[Sample], seed_set: Sequence[Sample], outputs: int
) -> np.ndarray:
    """Negative loss of every sample under a probe model fit on ``seed_set``."""
    x, y, _ = to_arrays(data)
    sx, sy, _ = to_arrays(seed_set)
    params = M.init_params(config.model, _kind(data), x.shape[1], outputs,
                           config.seed + 7919, config.hidden_width)
    opt = M.Adam(params, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed + 7919)
    bs = config.batch_size
    total = config.probe_epochs * math.ceil(len(sx) / bs)
    step = 0
    for _ in range(config.probe_epochs):
        order = rng.permutation(len(sx))
        for start in range(0, len(sx), bs):
            idx = order[start:start + bs]
            g = M.gradients(params, sx[idx], sy[idx], np.ones(len(idx)))
            opt.step(params, g, M.cosine_lr(step, total, config.learning_rate, config.warmup_ratio))
            step += 1
    return -M.losses(params, x, y)


def train(
    config: TrainConfig,
    train_data: Sequence[Sample],
    eval_data: Sequence[Sample],
    echo: dict | None = None,
) -> RunReport:
    if not train_data or not eval_data:
        raise EmptyDataError("train and eval data must be non-empty")
    overlap = {s.id for s in train_data} & {s.id for s in eval_data}
    if overlap:
        raise ValueError(f"{len(overlap)} sample ids appear in both train and eval data")

    rng = np.random.default_rng(config.seed)
    rcfg = config.reweight
    kind = _kind(train_data)
    outputs = _outputs(train_data, eval_data)
    report = RunReport(config=echo if echo is not None else config.to_dict())

    data = list(train_data)
    if config.prefilter is not None:
        seeds = [data[i] for i in warmup_indices(data, rcfg.warmup_samples or 640, rng)]
        if not seeds:
            raise EmptyDataError("prefilter needs clean High-tier samples to fit its probe")
        scores = probe_scores(config, data, seeds, outputs)
        data = prefilter(data, scores, config.prefilter)

    x, y, groups = to_arrays(data)
    ex, ey, _ = to_arrays(eval_data)
    ids = [s.id for s in data]
    noisy = np.asarray([s.is_noisy for s in data], dtype=bool)
    n = len(data)
    num_groups = int(max(groups.max(), 1))

    params = M.init_params(config.model, kind, x.shape[1], outputs, config.seed, config.hidden_width)
    opt = M.Adam(params, config.beta1, config.beta2, config.eps)
    registry = StatsRegistry(num_groups)
    phase = PhaseState()
    uses_detector = config.strategy != "uniform"

    bs = config.batch_size
    steps_per_epoch = math.ceil(n / bs)
    total_steps = config.epochs * steps_per_epoch
    lr0 = config.learning_rate

    def record_epoch(epoch):
        tl, ta = _evaluate_arrays(params, x, y, config.eval_tolerance)
        el, ea = _evaluate_arrays(params, ex, ey, config.eval_tolerance)
        report.epochs.append({
            "epoch": epoch, "train_loss": tl, "train_accuracy": ta,
            "eval_loss": el, "eval_accuracy": ea,
        })

    record_epoch(0)
    step = 0
    for epoch in range(1, config.epochs + 1):
        if epoch == 1:
            # same ordering for every strategy so paired runs see identical batches
            head = warmup_indices(data, rcfg.warmup_samples, rng)
            taken = set(head)
            rest = [i for i in rng.permutation(n) if i not in taken]
            order = np.asarray(head + rest, dtype=np.int64)
        else:
            order = rng.permutation(n)

        for start in range(0, n, bs):
            idx = order[start:start + bs]
            xb, yb, gb = x[idx], y[idx], groups[idx]
            lb = M.losses(params, xb, yb)
            if not np.all(np.isfinite(lb)):
                raise TrainingDiverged(step)

            if uses_detector:
                w, flagged, absorbed, tau = reweight_arrays(registry, lb, gb, rcfg, phase)
                if config.strategy == "no_welford":
                    w = np.ones(len(idx))
                elif config.strategy == "hard_filter":
                    w = np.where(flagged, 0.0, w)
            else:
                w = np.ones(len(idx))
                flagged = absorbed = np.zeros(len(idx), dtype=bool)
                tau = np.full(len(idx), np.nan)

            batch_loss = weighted_batch_loss(lb, w)
            grads = None
            micro = math.ceil(len(idx) / config.grad_accum)
            for m0 in range(0, len(idx), micro):
                sl = slice(m0, m0 + micro)
                g = M.gradients(params, xb[sl], yb[sl], w[sl], denom=len(idx))
                grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
            lr = M.cosine_lr(step, total_steps, lr0, config.warmup_ratio)
            opt.step(params, grads, lr)
            if not params.is_finite():
                raise TrainingDiverged(step)

            for j, i in enumerate(idx):
                report.steps.append({
                    "step": step, "epoch": epoch, "sample_id": ids[i],
                    "group": int(gb[j]), "loss": float(lb[j]),
                    "threshold": float(tau[j]), "flagged": bool(flagged[j]),
                    "absorbed": bool(absorbed[j]), "weight": float(w[j]),
                    "adjusted_loss": float(w[j]) * float(lb[j]),
                })
            if uses_detector:
                for g_id, cell in registry:
                    report.snapshots.append({
                        "step": step, "group": g_id, "count": cell.count,
                        "mean": cell.mean, "variance": cell.variance,
                    })
            report.trace.append({
                "step": step, "epoch": epoch, "lr": lr,
                "batch_loss": batch_loss, "mean_raw_loss": float(np.mean(lb)),
            })
            step += 1
        record_epoch(epoch)

    report.params = params
    report.summary = _summarize(config, report, ids, noisy, n, len(eval_data))
    return report


def _summarize(config, report, ids, noisy, n_train, n_eval) -> dict:
    final = report.epochs[-1]
    last = [r for r in report.steps if r["epoch"] == config.epochs]
    truth = dict(zip(ids, noisy.tolist()))
    det = detection_metrics([r["flagged"] for r in last], [truth[r["sample_id"]] for r in last])
    ws = weight_summary(last, truth)[config.epochs]
    clean_w = ws["clean"].mean if ws["clean"] else None
    noisy_w = ws["noisy"].mean if ws["noisy"] else None
    return {
        "strategy": config.strategy,
        "backend": BACKEND,
        "n_train": n_train,
        "n_eval": n_eval,
        "n_noisy": int(noisy.sum()),
        "steps": len(report.trace),
        "initial_eval_accuracy": report.epochs[0]["eval_accuracy"],
        "final_eval_accuracy": final["eval_accuracy"],
        "final_eval_loss": final["eval_loss"],
        "final_train_loss": final["train_loss"],
        "detection_precision": det.precision,
        "detection_recall": det.recall,
        "detection_f1": det.f1,
        "flagged_final_epoch": det.predicted_positives,
        "mean_weight_clean": clean_w,
        "mean_weight_noisy": noisy_w,
        "weight_gap": (clean_w - noisy_w) if clean_w is not None and noisy_w is not None else None,
    }
