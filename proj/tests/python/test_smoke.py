import math

import pytest

import bflsim


def small_config(**overrides):
    values = {
        "seed": 4,
        "rounds": 6,
        "total_clients": 8,
        "participants_per_round": 8,
        "data.num_samples": 800,
        "data.feature_dim": 6,
        "data.num_classes": 3,
        "eval_every": 3,
    }
    values.update(overrides)
    return bflsim.ExperimentConfig(values)


def test_order_statistics():
    s = [[1.0], [2.0], [3.0], [4.0], [100.0]]
    assert bflsim.coordinate_trimmed_mean(s, 1) == [3.0]
    assert bflsim.coordinate_median(s) == [3.0]
    assert bflsim.mean(s) == [22.0]
    assert bflsim.winsorize(s, 1) == [[2.0], [2.0], [3.0], [4.0], [4.0]]
    lo_hi = bflsim.coordinate_extremes([[0.0, 5.0], [1.0, -1.0]])
    assert list(lo_hi[0]) == [1.0, 5.0] or list(lo_hi[1]) == [1.0, 5.0]
    assert bflsim.krum_select([[0.0], [0.1], [10.0]], 0) == 0
    assert bflsim.fedavg([[0.0, 2.0], [2.0, 4.0]]) == [1.0, 3.0]


def test_defense_operations():
    tri = [[0.0], [0.5], [1.0]]
    assert bflsim.trust_scores(tri) == [0.0, 0.5, 0.0]
    assert bflsim.select_best([0.0, 0.5, 0.0]) == 1
    theta, p2 = bflsim.derive_fused(tri, 1, 2, 1)
    assert theta == [0.5]
    assert p2 == pytest.approx(1.0 / 3.0, abs=1e-12)
    theta, p1 = bflsim.clip_and_signal([[1.0], [2.0], [3.0], [4.0], [100.0]], 1)
    assert theta == [3.0] and p1 == pytest.approx(19.0)
    indices, fell_back = bflsim.filter_benign([[1.0, 1.0]] * 5)
    assert indices == [0, 1, 2, 3, 4] and not fell_back
    out = bflsim.defend([[3.0, 1.0]] * 4, m=2, per_side=1)
    assert out["global"] == pytest.approx([3.0, 1.0], abs=1e-12)
    assert sum(out["weights"].betas()) == pytest.approx(1.0, abs=1e-12)


def test_weight_rules():
    w = bflsim.AggWeights()
    w.beta1, w.beta2, w.beta3 = 0.4, 0.3, 0.3
    out = bflsim.update_weights("thresholded", w, 0.02, 0.5)
    assert out.betas() == pytest.approx([0.3, 0.4, 0.3], abs=1e-12)
    assert bflsim.threshold_free_betas(0.5, 0.5, 0.0) == pytest.approx([1 / 3.5, 0.5 / 3.5, 2 / 3.5], abs=1e-12)
    with pytest.raises(bflsim.DefenseConfigError):
        bflsim.threshold_free_betas(1.0, 0.0, 0.0)


def test_attacks():
    benign = [[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]
    crafted = bflsim.craft_attack("gaussian", 2, benign, [0.0, 0.0], seed=3)
    assert len(crafted) == 2 and all(len(v) == 2 for v in crafted)
    assert all(math.isfinite(x) for v in crafted for x in v)
    with pytest.raises(bflsim.ConfigError):
        bflsim.craft_attack("nope", 1, benign, [0.0, 0.0])


def test_errors_map_to_python_exceptions():
    with pytest.raises(bflsim.InsufficientPopulationError):
        bflsim.coordinate_trimmed_mean([[1.0]], 1)
    with pytest.raises(bflsim.DimensionError):
        bflsim.mean([[1.0], [1.0, 2.0]])
    with pytest.raises(bflsim.ConfigError):
        bflsim.ExperimentConfig({"roundz": 3})
    with pytest.raises(ValueError):
        bflsim.ExperimentConfig.from_json('{"rounds": 0}').validate()


def test_config_round_trip():
    cfg = small_config(**{"attack.kind": "trim", "defense.kind": "median"})
    back = bflsim.ExperimentConfig.from_json(cfg.to_json())
    assert back.entries() == cfg.entries()
    assert cfg.entries()["defense.kind"] == "median"
    assert cfg.problems() == []


def test_run_experiment_is_deterministic():
    cfg = small_config(malicious_fraction=0.25, **{"attack.kind": "gaussian"})
    a = bflsim.run_experiment(cfg)
    b = bflsim.run_experiment(cfg, workers=2)
    assert a == b
    assert [r["round"] for r in a] == list(range(1, 7))
    assert [r["test_error"] is not None for r in a] == [False, False, True, False, False, True]
    assert 0.0 <= bflsim.final_test_error(a) <= 1.0
    assert sum(a[0]["betas"]) == pytest.approx(1.0, abs=1e-12)


def test_sweep():
    runs = bflsim.run_sweep(small_config(rounds=2), "malicious_fraction", ["0", "0.25"], ["adabfl", "fedavg"])
    assert [(r["axis_value"], r["defense"]) for r in runs] == [
        ("0", "adabfl_3"),
        ("0", "fedavg"),
        ("0.25", "adabfl_3"),
        ("0.25", "fedavg"),
    ]
    assert all(len(r["history"]) == 2 for r in runs)
