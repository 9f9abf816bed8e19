"""Dataset assembly and multi-run experiments built from an ExperimentConfig."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .config import DataConfig, ExperimentConfig
from .data import (
    NoiseSpec,
    Sample,
    Task,
    Tier,
    generate,
    inject_noise,
    mix,
    parse_mixture,
    tier_rates,
)
from .metrics import spearman
from .trainer import TrainConfig, train

_TIER_CODE = {Tier.HIGH: "H", Tier.NORMAL: "N", Tier.LOW: "L"}
_STREAMS = {"H": 1, "N": 2, "L": 3, "eval": 10, "drift": 11, "mix": 12}


def derive_seed(seed: int, stream: str) -> int:
    """Independent 32-bit seed for one named random stream."""
    return int(np.random.SeedSequence([seed, _STREAMS[stream]]).generate_state(1)[0])


def build_tier(cfg: DataConfig, tier: Tier, seed: int) -> list[Sample]:
    """One tier's samples, with its per-group noise profile applied.

    Depends only on (cfg, tier, seed), so a tier is identical in every
    mixture that contains it.
    """
    code = _TIER_CODE[tier]
    s = derive_seed(seed, code)
    samples = generate(cfg.task, cfg.per_tier, s, id_prefix=f"{code}-", tier=tier)
    rate = cfg.tiers[code]
    if rate > 0:
        spec = NoiseSpec(
            per_group_rates=tier_rates(rate, cfg.task.num_groups),
            corruption=cfg.corruption,
            jitter_sigma=cfg.jitter_sigma,
        )
        samples = inject_noise(samples, spec, s + 1, num_classes=cfg.task.num_classes)
    return samples


def build_eval(cfg: DataConfig, seed: int) -> list[Sample]:
    return generate(cfg.task, cfg.eval_size, derive_seed(seed, "eval"), id_prefix="E-")


def build_train(cfg: DataConfig, seed: int, mixture: str | None = None,
                drift_fraction: float | None = None) -> list[Sample]:
    tiers = parse_mixture(mixture or cfg.mixture)
    parts = [(build_tier(cfg, t, seed), t) for t in tiers]
    frac = cfg.drift_fraction if drift_fraction is None else drift_fraction
    if frac > 0:
        n_primary = sum(len(p) for p, _ in parts)
        n_drift = int(round(frac * n_primary))
        if n_drift > 0:
            drift = generate(cfg.drift_task, n_drift, derive_seed(seed, "drift"),
                             id_prefix="D-", tier=Tier.HIGH, task_kind=Task.DRIFT)
            parts.append((drift, Tier.HIGH))
    return mix(parts, derive_seed(seed, "mix"))


def run(exp: ExperimentConfig, strategy: str, seed: int, mixture: str | None = None,
        drift_fraction: float | None = None, **train_changes):
    """Build data for ``seed`` and train one strategy on it."""
    tcfg: TrainConfig = replace(exp.train, strategy=strategy, seed=seed, **train_changes)
    train_data = build_train(exp.data, seed, mixture, drift_fraction)
    eval_data = build_eval(exp.data, seed)
    echo = {"experiment": exp.raw, "config_hash": exp.hash, "run": {
        "strategy": strategy, "seed": seed, "mixture": mixture or exp.data.mixture,
        "drift_fraction": exp.data.drift_fraction if drift_fraction is None else drift_fraction,
        **{k: v for k, v in train_changes.items()},
    }}
    return train(tcfg, train_data, eval_data, echo=echo)


def sweep_rows(exp: ExperimentConfig, mixture: str, strategy: str, seed: int) -> dict:
    report = run(exp, strategy, seed, mixture)
    s = report.summary
    return {
        "setting": mixture,
        "strategy": strategy,
        "seed": seed,
        "eval_accuracy": s["final_eval_accuracy"],
        "mean_weight_clean": s["mean_weight_clean"],
        "mean_weight_noisy": s["mean_weight_noisy"],
    }


def spearman_by_strategy(rows: list[dict], mixtures: list[str]) -> dict[str, float | None]:
    """Spearman(complexity rank, seed-mean eval accuracy) per strategy."""
    out = {}
    for strategy in sorted({r["strategy"] for r in rows}):
        means = []
        for m in mixtures:
            acc = [r["eval_accuracy"] for r in rows if r["strategy"] == strategy and r["setting"] == m]
            means.append(float(np.mean(acc)))
        out[strategy] = spearman(list(range(1, len(mixtures) + 1)), means) if len(mixtures) >= 2 else None
    return out
