import math

import numpy as np
import pytest

import mixrom


def small_config(**extra):
    cfg = {"nodes_per_side": 9, "dt": 0.02, "end_time": 0.4}
    cfg.update(extra)
    return cfg


def test_simulate_returns_normalized_qois():
    out = mixrom.simulate(small_config(alpha_T=0.01))
    assert [q["species"] for q in out["qois"]] == ["A", "B", "C"]
    for q in out["qois"]:
        assert len(q["t"]) == 21
        assert max(q["degree_of_mixing"]) == pytest.approx(1.0)
        assert min(q["degree_of_mixing"]) >= 0.0
    assert out["m_norm_monotone"]
    assert np.all(out["c_f"] >= 0.0)


def test_bad_config_raises_value_error():
    with pytest.raises(ValueError):
        mixrom.simulate(small_config(dt=0.03))


def test_fit_exponent():
    t = np.linspace(0.0, 1.0, 51)
    rate, pref, r2 = mixrom.fit_exponent(list(2.0 * np.exp(-1.5 * t)), list(t))
    assert rate == pytest.approx(-1.5)
    assert pref == pytest.approx(2.0)
    assert r2 == pytest.approx(1.0)


def test_svr_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(60, 2))
    y = 0.5 + 0.4 * np.sin(3 * x[:, 0])
    model = mixrom.svr_train(x, y, penalty=100.0, gamma=1.0, epsilon=0.01)
    assert mixrom.r2_score(y, model.predict(x)) > 0.95
    path = tmp_path / "svr.json"
    model.save(path)
    back = mixrom.SvrModel.load(path)
    assert np.array_equal(back.decision(x), model.decision(x))


def test_feature_importance_and_kmeans():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(200, 3))
    y = 3 * x[:, 1] + 0.05 * rng.normal(size=200)
    for method in ("f_test", "mutual_info", "random_forest"):
        rep = mixrom.feature_importance(x, y, ["a", "b", "c"], method, 3)
        assert rep["ranking"][0] == 1
    pts = np.vstack([rng.normal(0, 0.1, (20, 2)), rng.normal(3, 0.1, (20, 2))])
    labels, centroids, explained = mixrom.kmeans(pts, 2, 0)
    assert len(set(labels[:20])) == 1 and labels[0] != labels[20]
    assert centroids.shape == (2, 2)
    assert explained > 0.95
    assert not math.isnan(explained)


def test_sweep_and_dataset(tmp_path):
    spec = {
        "v0": [1.0],
        "aniso_ratio": [1.0, 100.0],
        "D_m": [0.001],
        "kappa_fL": [2.0],
        "period_T": [0.0001],
        "base": small_config(),
    }
    runs, ok = mixrom.run_sweep(spec, tmp_path / "sweep")
    assert (runs, ok) == (2, 2)
    x, y, ids, row_sim = mixrom.load_dataset(tmp_path / "sweep")
    assert x.shape == (40, len(mixrom.feature_names))
    assert y.shape == (40,)
    assert len(ids) == 2 and set(row_sim) == {0, 1}
