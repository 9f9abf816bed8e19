from dataclasses import replace

import numpy as np
import pytest

from resure import model as M
from resure.data import NoiseSpec, TaskSpec, Tier, generate, inject_noise
from resure.reweight import ReweightConfig
from resure.trainer import EmptyDataError, TrainConfig, TrainingDiverged, evaluate, train

TASK = TaskSpec(dim=8)


def small_data(seed=0, n=600, noise=None):
    data = generate(TASK, n, seed, id_prefix="T-", tier=Tier.HIGH)
    if noise:
        data = inject_noise(data, NoiseSpec(noise), seed + 1, num_classes=4)
    return data, generate(TASK, 300, seed + 100, id_prefix="E-")


FAST = TrainConfig(epochs=2, batch_size=32, reweight=ReweightConfig(warmup_samples=64, ramp_steps=5))


def test_uniform_training_improves_accuracy():
    tr, ev = small_data()
    report = train(replace(FAST, strategy="uniform", epochs=3), tr, ev)
    s = report.summary
    assert s["final_eval_accuracy"] > s["initial_eval_accuracy"] + 0.2
    assert report.epochs[-1]["train_loss"] < report.epochs[0]["train_loss"]
    assert all(r["weight"] == 1.0 and not r["flagged"] for r in report.steps)
    assert report.snapshots == []


def test_resure_close_to_uniform_on_clean_data():
    tr, ev = small_data(1)
    acc = {s: train(replace(FAST, strategy=s, epochs=3), tr, ev).summary["final_eval_accuracy"]
           for s in ("resure", "uniform")}
    assert abs(acc["resure"] - acc["uniform"]) < 0.05


def test_run_is_deterministic():
    tr, ev = small_data(2, noise={1: 0.3, 2: 0.3})
    a = train(FAST, tr, ev)
    b = train(FAST, tr, ev)
    assert a.steps == b.steps and a.snapshots == b.snapshots and a.summary == b.summary


def test_step_log_layout():
    tr, ev = small_data(3)
    report = train(FAST, tr, ev)
    steps_per_epoch = -(-len(tr) // FAST.batch_size)
    assert len(report.trace) == 2 * steps_per_epoch
    assert len(report.steps) == 2 * len(tr)
    assert len(report.epochs) == 3 and report.epochs[0]["epoch"] == 0
    # epoch 1 opens with the warm-up block of clean primary samples, all absorbed
    head = [r for r in report.steps if r["step"] < 2]
    assert all(r["absorbed"] and r["weight"] == 1.0 for r in head)
    groups = {r["group"] for r in report.snapshots}
    assert len(report.snapshots) == len(report.trace) * len(groups)


def test_no_welford_matches_uniform_trace():
    tr, ev = small_data(4, noise={3: 0.5, 4: 0.5})
    a = train(replace(FAST, strategy="no_welford"), tr, ev)
    b = train(replace(FAST, strategy="uniform"), tr, ev)
    assert a.trace == b.trace
    assert any(r["flagged"] for r in a.steps)


def test_hard_filter_zeroes_flagged():
    tr, ev = small_data(5, noise={1: 0.4, 2: 0.4, 3: 0.4, 4: 0.4})
    report = train(replace(FAST, strategy="hard_filter"), tr, ev)
    flagged = [r for r in report.steps if r["flagged"]]
    assert flagged and all(r["weight"] == 0.0 for r in flagged)


def test_resure_downweights_noisy_samples():
    tr, ev = small_data(6, n=1200, noise={1: 0.3, 2: 0.3, 3: 0.3, 4: 0.3})
    s = train(replace(FAST, epochs=3), tr, ev).summary
    assert s["mean_weight_noisy"] < s["mean_weight_clean"]
    assert s["detection_recall"] > 0.5


def test_grad_accum_matches_single_batch():
    tr, ev = small_data(7)
    a = train(FAST, tr, ev)
    b = train(replace(FAST, grad_accum=4), tr, ev)
    for x, y in zip(a.trace, b.trace):
        assert x["batch_loss"] == pytest.approx(y["batch_loss"], rel=1e-9)
    for k in a.params.arrays:
        assert np.allclose(a.params.arrays[k], b.params.arrays[k], rtol=1e-8, atol=1e-12)


def test_prefilter_keeps_fraction():
    tr, ev = small_data(8, noise={1: 0.5})
    report = train(replace(FAST, prefilter=0.75), tr, ev)
    assert report.summary["n_train"] == 450


def test_divergence_reports_step():
    tr, ev = small_data(9)
    with np.errstate(all="ignore"), pytest.raises(TrainingDiverged) as info:
        train(replace(FAST, strategy="uniform", lr=1e308), tr, ev)
    assert 0 < info.value.step < 5


def test_rejects_overlap_and_empty():
    tr, ev = small_data(10)
    with pytest.raises(ValueError, match="both train and eval"):
        train(FAST, tr, tr[:10])
    with pytest.raises(EmptyDataError):
        train(FAST, [], ev)


def test_evaluate_constant_model():
    params = M.init_params("linear", "classification", 2, 2, 0)
    params.arrays["W"][...] = 0.0
    params.arrays["b"][...] = [1.0, 0.0]
    data = [s for s in generate(TaskSpec(dim=2, num_classes=2, num_groups=1), 200, 0)]
    data = [replace(s, label=i % 2) for i, s in enumerate(data)]
    loss, acc = evaluate(params, data)
    assert acc == 0.5
    with pytest.raises(EmptyDataError):
        evaluate(params, [])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(strategy="magic")
    with pytest.raises(ValueError):
        TrainConfig(prefilter=0.0)
