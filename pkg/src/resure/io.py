"""JSON-lines datasets, CSV tables and JSON summaries."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .data import DialogueRecord, InvalidRecordError, Sample, Task, Tier

UNDEFINED_CSV = "undefined"
_SAMPLE_KEYS = ("id", "features", "label", "group", "is_noisy", "tier", "task")


class DataError(ValueError):
    pass


def sample_to_dict(s: Sample) -> dict:
    return {
        "id": s.id,
        "features": list(s.features),
        "label": s.label,
        "group": s.group,
        "is_noisy": s.is_noisy,
        "tier": s.tier.value,
        "task": s.task.value,
    }


def sample_from_dict(d: dict) -> Sample:
    missing = [k for k in _SAMPLE_KEYS if k not in d]
    if missing:
        raise ValueError(f"missing fields {missing}")
    features = tuple(float(v) for v in d["features"])
    if not all(math.isfinite(v) for v in features):
        raise ValueError("features must be finite")
    label = d["label"]
    if isinstance(label, bool) or not isinstance(label, (int, float)):
        raise ValueError(f"label must be a number, got {label!r}")
    if not isinstance(d["group"], int) or d["group"] < 1:
        raise ValueError(f"group must be a positive integer, got {d['group']!r}")
    return Sample(
        id=str(d["id"]),
        features=features,
        label=label,
        group=d["group"],
        is_noisy=bool(d["is_noisy"]),
        tier=Tier(d["tier"]),
        task=Task(d["task"]),
    )


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_samples(path: str | Path, samples: Iterable[Sample], config_hash: str | None = None) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            row = sample_to_dict(s)
            if config_hash is not None:
                row["config_hash"] = config_hash
            fh.write(_dump_line(row) + "\n")
            n += 1
    return n


def _read_jsonl(path: str | Path, convert):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(convert(json.loads(line)))
            except (ValueError, TypeError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def read_samples(path: str | Path) -> list[Sample]:
    return _read_jsonl(path, sample_from_dict)


def write_dialogues(path: str | Path, dialogues: Iterable[DialogueRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in dialogues:
            fh.write(_dump_line({
                "turns": [list(t) for t in d.turns],
                "supervised": list(d.supervised),
            }) + "\n")


def _dialogue_from_dict(d: dict) -> DialogueRecord:
    try:
        return DialogueRecord(
            turns=tuple((str(u), str(a)) for u, a in d["turns"]),
            supervised=tuple(bool(m) for m in d["supervised"]),
        )
    except InvalidRecordError as exc:
        raise ValueError(str(exc)) from exc


def read_dialogues(path: str | Path) -> list[DialogueRecord]:
    return _read_jsonl(path, _dialogue_from_dict)


def format_value(v) -> str:
    if v is None:
        return UNDEFINED_CSV
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_float(text: str) -> float | None:
    return None if text == UNDEFINED_CSV else float(text)


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str],
              config_hash: str | None = None) -> None:
    cols = list(columns) + (["config_hash"] if config_hash is not None else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            values = [format_value(row.get(c)) for c in columns]
            if config_hash is not None:
                values.append(config_hash)
            w.writerow(values)


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


STEP_COLUMNS = ("step", "epoch", "sample_id", "group", "loss", "threshold",
                "flagged", "absorbed", "weight", "adjusted_loss")
EPOCH_COLUMNS = ("epoch", "train_loss", "train_accuracy", "eval_loss", "eval_accuracy")
SNAPSHOT_COLUMNS = ("step", "group", "count", "mean", "variance")
TRACE_COLUMNS = ("step", "epoch", "lr", "batch_loss", "mean_raw_loss")
