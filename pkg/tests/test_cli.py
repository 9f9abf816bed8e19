import copy
import json

import numpy as np
import pytest

from resure import io
from resure.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, main
from resure.config import ConfigError, config_hash, parse


@pytest.fixture
def small_raw(demo_raw):
    raw = copy.deepcopy(demo_raw)
    raw["data"]["per_tier"] = 200
    raw["data"]["eval_size"] = 200
    raw["data"]["task"]["dim"] = 8
    raw["train"]["epochs"] = 2
    raw["train"]["reweight"]["warmup_samples"] = 128
    raw["sweep"]["seeds"] = [0, 1]
    return raw


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_gen_data_manifest(tmp_path, small_raw):
    cfg = write_config(tmp_path, small_raw)
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "d")]) == 0
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["config_hash"] == config_hash(small_raw)
    files = manifest["files"]
    assert files["train.jsonl"]["count"] == 600 and files["eval.jsonl"]["count"] == 200
    assert files["tier_High.jsonl"]["noisy"] == 0
    assert files["tier_Low.jsonl"]["noisy"] > files["tier_Normal.jsonl"]["noisy"] > 0
    samples = io.read_samples(tmp_path / "d" / "train.jsonl")
    assert sum(s.is_noisy for s in samples) == files["train.jsonl"]["noisy"]


def test_gen_data_deterministic(tmp_path, small_raw):
    cfg = write_config(tmp_path, small_raw)
    for out in ("a", "b"):
        main(["gen-data", "--config", cfg, "--out", str(tmp_path / out)])
    for name in ("train.jsonl", "eval.jsonl", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_schema_error_names_field(tmp_path, small_raw, capsys):
    small_raw["train"]["reweight"]["alpha"] = "high"
    cfg = write_config(tmp_path, small_raw)
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "d")]) == EXIT_CONFIG
    assert "train/reweight/alpha" in capsys.readouterr().err


def test_unknown_key_rejected(small_raw):
    small_raw["train"]["learning_rate"] = 0.1
    with pytest.raises(ConfigError, match="learning_rate"):
        parse(small_raw)


def test_missing_config_file(tmp_path):
    assert main(["train", "--config", str(tmp_path / "nope.json"), "--data", str(tmp_path)]) == EXIT_CONFIG


@pytest.fixture
def dataset(tmp_path, small_raw):
    cfg = write_config(tmp_path, small_raw)
    main(["gen-data", "--config", cfg, "--out", str(tmp_path / "data")])
    return cfg, tmp_path / "data"


def test_train_outputs(tmp_path, dataset, small_raw):
    cfg, data = dataset
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--data", str(data), "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["config_hash"] == config_hash(small_raw)
    assert doc["config"]["experiment"] == small_raw
    for key in ("detection_precision", "detection_recall", "mean_weight_clean", "mean_weight_noisy"):
        assert key in doc["summary"]
    steps = io.read_csv(out / "steps.csv")
    assert len(steps) == 2 * 600
    assert all(r["config_hash"] == doc["config_hash"] for r in steps)
    metrics = io.read_csv(out / "metrics.csv")
    assert [r["epoch"] for r in metrics] == ["0", "1", "2"]
    assert io.read_csv(out / "stats.csv")


def test_uniform_run_has_unit_weights(tmp_path, dataset, small_raw):
    _, data = dataset
    small_raw["train"]["strategy"] = "uniform"
    cfg = write_config(tmp_path, small_raw, "uniform.json")
    out = tmp_path / "uni"
    assert main(["train", "--config", cfg, "--data", str(data), "--out", str(out)]) == 0
    steps = io.read_csv(out / "steps.csv")
    assert {r["weight"] for r in steps} == {"1.0"}
    assert {r["threshold"] for r in steps} == {"nan"}
    summary = json.loads((out / "summary.json").read_text())["summary"]
    assert summary["detection_precision"] is None


def test_corrupt_jsonl_exit_code(tmp_path, dataset, capsys):
    cfg, data = dataset
    path = data / "train.jsonl"
    lines = path.read_text().splitlines()
    lines[4] = "{not json"
    path.write_text("\n".join(lines) + "\n")
    assert main(["train", "--config", cfg, "--data", str(data), "--out", str(tmp_path / "r")]) == EXIT_DATA
    assert "train.jsonl:5:" in capsys.readouterr().err


def test_missing_data_dir(tmp_path, small_raw):
    cfg = write_config(tmp_path, small_raw)
    assert main(["train", "--config", cfg, "--data", str(tmp_path / "absent"),
                 "--out", str(tmp_path / "r")]) == EXIT_DATA


def test_divergence_exit_code(tmp_path, dataset, small_raw):
    _, data = dataset
    small_raw["train"]["lr"] = 1e308
    cfg = write_config(tmp_path, small_raw, "hot.json")
    with np.errstate(all="ignore"):
        code = main(["train", "--config", cfg, "--data", str(data), "--out", str(tmp_path / "r")])
    assert code == EXIT_DIVERGED


def test_sweep_table(tmp_path, small_raw):
    cfg = write_config(tmp_path, small_raw)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    rows = io.read_csv(tmp_path / "s" / "sweep.csv")
    assert len(rows) == 3 * 2 * 2
    assert {(r["setting"], r["strategy"], r["seed"]) for r in rows} == {
        (m, s, str(seed)) for m in ("H", "H+N", "H+N+L") for s in ("resure", "uniform") for seed in (0, 1)
    }
    assert all(r["status"] == "ok" for r in rows)
    corr = io.read_csv(tmp_path / "s" / "spearman.csv")
    assert {r["strategy"] for r in corr} == {"resure", "uniform"}
    assert all(-1 <= float(r["spearman"]) <= 1 for r in corr)


def test_parallel_sweep_matches_sequential(tmp_path, small_raw):
    small_raw["sweep"]["mixtures"] = ["H", "H+N"]
    cfg = write_config(tmp_path, small_raw)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "seq")]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "par"), "--jobs", "2"]) == 0
    for name in ("sweep.csv", "spearman.csv"):
        assert (tmp_path / "seq" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()


def test_sweep_single_mixture_is_undefined(tmp_path, small_raw):
    small_raw["sweep"] = {"mixtures": ["H+N"], "strategies": ["resure"], "seeds": [0]}
    cfg = write_config(tmp_path, small_raw)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    rows = io.read_csv(tmp_path / "s" / "sweep.csv")
    assert rows[0]["spearman_eval_accuracy"] == "undefined"


def test_sweep_requires_section(tmp_path, small_raw):
    del small_raw["sweep"]
    cfg = write_config(tmp_path, small_raw)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == EXIT_CONFIG


def test_report_joins_runs(tmp_path, dataset, small_raw):
    cfg, data = dataset
    for name in ("r1", "r2"):
        main(["train", "--config", cfg, "--data", str(data), "--out", str(tmp_path / "runs" / name)])
    assert main(["report", "--runs", str(tmp_path / "runs")]) == 0
    rows = io.read_csv(tmp_path / "runs" / "report.csv")
    assert [r["run"] for r in rows] == ["r1", "r2"]
    assert rows[0]["eval_accuracy"] == rows[1]["eval_accuracy"]
    assert float(rows[0]["mean_weight_noisy"]) < float(rows[0]["mean_weight_clean"])


def test_output_root_env(tmp_path, small_raw, monkeypatch):
    monkeypatch.setenv("RESURE_OUTPUT_ROOT", str(tmp_path / "root"))
    cfg = write_config(tmp_path, small_raw)
    assert main(["gen-data", "--config", cfg, "--out", "rel"]) == 0
    assert (tmp_path / "root" / "rel" / "manifest.json").exists()
