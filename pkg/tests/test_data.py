import math
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resure import io
from resure.data import (
    ConfigError,
    Corruption,
    DialogueRecord,
    InvalidRecordError,
    NoiseSpec,
    Task,
    TaskSpec,
    Tier,
    generate,
    inject_noise,
    mix,
    prefilter,
    tier_rates,
    to_arrays,
    true_predict,
    turn_group,
)

TASK = TaskSpec()


def dialogue(mask):
    return DialogueRecord(tuple((f"u{i}", f"a{i}") for i in range(len(mask))), tuple(mask))


@pytest.mark.parametrize("mask,expected", [
    ([True, True, True], 3),
    ([True, True, False, False], 2),
    ([True], 1),
    ([False, True, False], 2),
])
def test_turn_group(mask, expected):
    assert turn_group(dialogue(mask)) == expected


def test_turn_group_invalid():
    with pytest.raises(InvalidRecordError):
        dialogue([False, False])
    with pytest.raises(InvalidRecordError):
        DialogueRecord((("a", "b"),), (True, True))


def test_turn_group_ignores_unsupervised_content():
    a = dialogue([True, False, True, False])
    b = DialogueRecord((("x", "y"), ("changed", "text"), ("u2", "a2"), ("more", "noise")), a.supervised)
    assert turn_group(a) == turn_group(b) == 3


def test_dialogue_roundtrip(tmp_path):
    recs = [dialogue([True, False]), dialogue([True, True, True])]
    io.write_dialogues(tmp_path / "d.jsonl", recs)
    assert io.read_dialogues(tmp_path / "d.jsonl") == recs


def test_generate_deterministic(tmp_path):
    a = generate(TASK, 100, 42)
    b = generate(TASK, 100, 42)
    io.write_samples(tmp_path / "a.jsonl", a)
    io.write_samples(tmp_path / "b.jsonl", b)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert generate(TASK, 100, 43) != a


def test_generate_contract():
    data = generate(TASK, 500, 1)
    assert len(data) == 500 and len({s.id for s in data}) == 500
    assert all(1 <= s.group <= TASK.num_groups and not s.is_noisy for s in data)
    assert all(len(s.features) == TASK.dim and all(math.isfinite(v) for v in s.features) for s in data)
    assert set(Counter(s.group for s in data)) == set(range(1, TASK.num_groups + 1))


def test_true_rule_meets_clean_accuracy():
    data = generate(TASK, 4000, 3)
    x, y, _ = to_arrays(data)
    acc = float(np.mean(true_predict(TASK, x) == y))
    assert acc >= TASK.clean_accuracy


def test_true_rule_exact_without_feature_noise():
    task = replace(TASK, group_feature_noise=0.0)
    x, y, _ = to_arrays(generate(task, 1000, 3))
    assert np.array_equal(true_predict(task, x), y)


def test_regression_task():
    task = TaskSpec(kind="regression", dim=8, group_feature_noise=0.0, residual_std=0.1)
    data = generate(task, 2000, 0)
    x, y, _ = to_arrays(data)
    resid = y - true_predict(task, x)
    assert abs(np.std(resid) - 0.1) < 0.01
    assert all(isinstance(s.label, float) for s in data)


@pytest.mark.parametrize("kwargs", [{"dim": 0}, {"num_groups": 0}, {"kind": "ranking"},
                                    {"num_classes": 1}, {"group_probs": (0.5, 0.5)}])
def test_task_validation(kwargs):
    with pytest.raises(ConfigError):
        TaskSpec(**kwargs)


def test_count_zero():
    with pytest.raises(ConfigError):
        generate(TASK, 0, 1)


def test_noise_rate_zero_is_identity():
    data = generate(TASK, 300, 5)
    out = inject_noise(data, NoiseSpec({1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0}), 9)
    assert out == data


@pytest.mark.parametrize("corruption", list(Corruption)[:2])
def test_noise_rate_one_on_group_two(corruption):
    data = generate(TASK, 400, 5)
    out = inject_noise(data, NoiseSpec({2: 1.0}, corruption), 9, num_classes=4)
    for before, after in zip(data, out):
        if before.group == 2:
            assert after.is_noisy and after.label != before.label
        else:
            assert after == before


def test_noise_exact_count():
    data = [replace(s, group=1) for s in generate(TASK, 1000, 8)]
    out = inject_noise(data, NoiseSpec({1: 0.2}), 1)
    assert sum(s.is_noisy for s in out) == math.floor(0.2 * 1000) == 200


def test_noise_floor_is_robust_to_rounding():
    data = [replace(s, group=1) for s in generate(TASK, 100, 8)]
    # 0.29 * 100 evaluates to 28.999999999999996
    assert sum(s.is_noisy for s in inject_noise(data, NoiseSpec({1: 0.29}), 1)) == 29


def test_target_jitter():
    task = TaskSpec(kind="regression", dim=4)
    data = generate(task, 200, 2)
    out = inject_noise(data, NoiseSpec({g: 0.5 for g in range(1, 5)}, Corruption.TARGET_JITTER, 2.0), 3)
    for a, b in zip(data, out):
        assert (a.label != b.label) == b.is_noisy


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.integers(1, 4), st.floats(0, 1), max_size=4), st.integers(0, 1000))
def test_noise_preserves_everything_but_labels(rates, seed):
    data = generate(TASK, 120, 4)
    out = inject_noise(data, NoiseSpec(rates), seed, num_classes=4)
    assert [(s.id, s.features, s.group, s.tier) for s in out] == [(s.id, s.features, s.group, s.tier) for s in data]
    for g, r in rates.items():
        members = [s for s in out if s.group == g]
        assert sum(s.is_noisy for s in members) == math.floor(r * len(members) + 1e-9)
    for a, b in zip(data, out):
        assert b.is_noisy == (a.label != b.label)


def test_noise_spec_validation():
    with pytest.raises(ConfigError):
        NoiseSpec({1: 1.5})


def test_tier_rates_profile():
    rates = tier_rates(0.4, 4)
    assert list(rates.values()) == sorted(rates.values())
    assert sum(rates.values()) / 4 == pytest.approx(0.4)
    assert tier_rates(0.0, 3) == {1: 0.0, 2: 0.0, 3: 0.0}
    assert max(tier_rates(0.9, 4).values()) == 1.0


def test_mix():
    h = generate(TASK, 100, 1, id_prefix="H-")
    n = generate(TASK, 100, 2, id_prefix="N-")
    low = generate(TASK, 100, 3, id_prefix="L-")
    single = mix([(h, Tier.HIGH)], 0)
    assert sorted(s.id for s in single) == sorted(s.id for s in h)
    out = mix([(h, Tier.HIGH), (n, Tier.NORMAL), (low, Tier.LOW)], 7)
    assert Counter(s.tier for s in out) == {Tier.HIGH: 100, Tier.NORMAL: 100, Tier.LOW: 100}
    assert out == mix([(h, Tier.HIGH), (n, Tier.NORMAL), (low, Tier.LOW)], 7)
    with pytest.raises(ConfigError):
        mix([], 0)


def test_prefilter():
    data = generate(TASK, 100, 1)
    scores = np.random.default_rng(0).standard_normal(100)
    by_id = dict(zip((s.id for s in data), scores))
    kept = prefilter(data, lambda s: by_id[s.id], 0.75)
    assert len(kept) == 75
    dropped = [s for s in data if s not in kept]
    assert min(by_id[s.id] for s in kept) >= max(by_id[s.id] for s in dropped)
    assert prefilter(data, scores, 1.0) == data


def test_prefilter_ties_by_id():
    data = generate(TASK, 100, 1)
    kept = prefilter(data, [0.0] * 100, 0.5)
    assert [s.id for s in kept] == sorted(s.id for s in data)[:50]
    with pytest.raises(ConfigError):
        prefilter(data, [0.0] * 100, 0.0)


def test_sample_jsonl_roundtrip(tmp_path):
    data = inject_noise(generate(TASK, 50, 1), NoiseSpec({1: 0.5}), 2)
    data = [replace(s, tier=Tier.LOW, task=Task.DRIFT) if i % 3 == 0 else s for i, s in enumerate(data)]
    io.write_samples(tmp_path / "s.jsonl", data, config_hash="abc")
    assert io.read_samples(tmp_path / "s.jsonl") == data


def test_corrupt_jsonl_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    io.write_samples(path, generate(TASK, 3, 1))
    lines = path.read_text().splitlines()
    lines[1] = lines[1][:20]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(io.DataError, match=r"bad\.jsonl:2:"):
        io.read_samples(path)
