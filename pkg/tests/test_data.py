"""Dataset loading, splitting and run persistence."""

import json
import os

import numpy as np
import pytest

from swvi import data
from swvi.engine import SwviConfig, run_swvi
from swvi.families import meanfield, mlp
from swvi.mcmc import KernelConfig
from swvi.targets import GaussianSpec, gaussian_target

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
IONOSPHERE = os.path.join(ROOT, "data", "ionosphere.data")


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_string_labels_map_in_file_order(tmp_path):
    path = _write(tmp_path, "toy.csv", "1.0,2.0,g\n3.0,4.0,b\n5.0,6.0,g\n")
    ds = data.load_csv(path, positive_label="g")
    np.testing.assert_array_equal(ds.labels, [1, 0, 1])
    assert ds.d == 3 and ds.feature_names[-1] == "bias"
    np.testing.assert_array_equal(ds.features[:, -1], 1.0)


def test_header_and_named_label_column(tmp_path):
    path = _write(tmp_path, "h.csv", "y,a,b\n1,0.5,2\n0,1.5,3\n")
    ds = data.load_csv(path, label_column="y", add_bias=False)
    assert ds.feature_names == ("a", "b")
    np.testing.assert_array_equal(ds.labels, [1, 0])


def test_header_only_file_is_empty(tmp_path):
    path = _write(tmp_path, "h.csv", "a,b,label\n")
    with pytest.raises(ValueError, match="empty"):
        data.load_csv(path)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        data.load_csv("/nonexistent/file.csv")


def test_non_binary_labels_listed(tmp_path):
    path = _write(tmp_path, "w.csv", "1,a\n2,b\n3,c\n")
    with pytest.raises(ValueError, match=r"\['a', 'b', 'c'\]"):
        data.load_csv(path)
    ds = data.load_csv(path, positive_label="a", one_vs_rest=True)
    np.testing.assert_array_equal(ds.labels, [1, 0, 0])


def test_unparseable_rows_reported_with_lines(tmp_path):
    path = _write(tmp_path, "bad.csv", "1,0\n2,1\nx,1\n4\n")
    with pytest.raises(ValueError, match="lines 3, 4"):
        data.load_csv(path)


def test_ionosphere_dimensions():
    ds = data.load_csv(IONOSPHERE, positive_label="g")
    assert ds.n == 351 and ds.d == 35
    assert set(np.unique(ds.labels)) == {0, 1}


def test_split_sizes_and_determinism():
    rng = np.random.default_rng(0)
    ds = data.Dataset(np.hstack([rng.normal(size=(270, 3)), np.ones((270, 1))]),
                      rng.integers(0, 2, 270), ("a", "b", "c", "bias"))
    train, test = data.split(ds, 0.2, seed=7)
    assert (train.n, test.n) == (216, 54)
    again = data.split(ds, 0.2, seed=7)
    assert np.array_equal(again[0].features, train.features)
    assert np.array_equal(again[1].labels, test.labels)
    other = data.split(ds, 0.2, seed=8)
    assert not np.array_equal(other[0].features, train.features)


def test_standardization_uses_train_statistics():
    rng = np.random.default_rng(1)
    X = np.hstack([rng.normal(5, 3, size=(100, 2)), np.zeros((100, 1)), np.ones((100, 1))])
    ds = data.Dataset(X, rng.integers(0, 2, 100), ("a", "b", "const", "bias"))
    train, test = data.split(ds, 0.25, seed=0)
    np.testing.assert_allclose(train.features[:, :2].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(train.features[:, :2].std(axis=0), 1.0, rtol=1e-12)
    np.testing.assert_array_equal(train.features[:, 2], 0.0)
    np.testing.assert_array_equal(test.features[:, 3], 1.0)


def test_load_split_load_is_deterministic():
    a = data.split(data.load_csv(IONOSPHERE, positive_label="g"), 0.2, seed=3)
    b = data.split(data.load_csv(IONOSPHERE, positive_label="g"), 0.2, seed=3)
    assert np.array_equal(a[0].features, b[0].features)
    assert np.array_equal(a[1].labels, b[1].labels)


def _small_trace(iterations=3, family=None):
    target = gaussian_target(GaussianSpec([0.0, 0.0], np.eye(2)))
    cfg = SwviConfig(iterations=iterations, warmup_lag=1, particles=20, projections=5,
                     kernel=KernelConfig("rwmh", rwmh_std=1.0))
    return run_swvi(target, family or meanfield([0.5, 0.5]), cfg)


def test_write_trace_layout(tmp_path):
    csv_path, json_path = data.write_trace(_small_trace(), tmp_path / "run")
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "iter,sw_loss,acceptance_rate,wall_ms"
    assert len(lines) == 4
    assert not lines[1].endswith(",nan")
    summary = json.load(open(json_path))
    assert set(summary) >= {"params", "stationarity_index", "final_sw_loss", "config"}


def test_timing_column_can_be_disabled(tmp_path):
    csv_path, _ = data.write_trace(_small_trace(), tmp_path, include_timing=False)
    rows = open(csv_path).read().splitlines()[1:]
    assert all(r.endswith(",nan") for r in rows)


def test_trace_round_trip_is_exact(tmp_path):
    trace = _small_trace(10)
    csv_path, _ = data.write_trace(trace, tmp_path)
    cols = data.read_trace(csv_path)
    np.testing.assert_array_equal(cols["sw_loss"], trace.losses)
    np.testing.assert_array_equal(cols["iter"], np.arange(10))


@pytest.mark.parametrize("family", [meanfield([0.1, -0.2], [0.3, 0.4]),
                                    mlp(2, np.random.default_rng(0), (5,))])
def test_params_round_trip_bit_equal(tmp_path, family):
    trace = _small_trace(3, family)
    _, json_path = data.write_trace(trace, tmp_path)
    back = data.load_params(json_path)
    assert np.array_equal(back.flat, trace.params.flat)
    assert back.kind == trace.params.kind and back.layers == trace.params.layers


def test_empty_output_dir_rejected():
    with pytest.raises(ValueError):
        data.write_trace(_small_trace(), "")


def test_cloud_round_trip(tmp_path):
    cloud = np.random.default_rng(2).normal(size=(30, 3)) * 1e-7 + np.pi
    path = data.write_cloud(str(tmp_path / "c.csv"), cloud)
    back = data.read_cloud(path)
    assert np.max(np.abs(back - cloud)) <= 1e-12
    assert np.array_equal(back, cloud)


def test_read_cloud_skips_header(tmp_path):
    path = _write(tmp_path, "c.csv", "x,y\n1,2\n3,4\n")
    np.testing.assert_array_equal(data.read_cloud(path), [[1, 2], [3, 4]])


def test_run_config_errors(tmp_path):
    bad = _write(tmp_path, "bad.json", '{\n  "iters": 3,\n  oops\n}')
    with pytest.raises(ValueError, match="line 3"):
        data.load_run_config(bad, ["iters"])
    unknown = _write(tmp_path, "u.json", '{"colour": 1}')
    with pytest.raises(ValueError, match="colour"):
        data.load_run_config(unknown, ["iters"])


def test_target_spec_files(tmp_path):
    g = _write(tmp_path, "g.json", '{"mean": [0, 1], "covariance": [[1, 0], [0, 2]]}')
    assert data.load_target_spec(g, "gaussian").dim == 2
    m = _write(tmp_path, "m.json", json.dumps({"components": [
        {"weight": 0.5, "mean": [0], "covariance": [[1]]},
        {"weight": 0.5, "mean": [3], "covariance": [[0.5]]}]}))
    assert len(data.load_target_spec(m, "gmm").components) == 2
    broken = _write(tmp_path, "b.json", '{"mean": [0, 1],\n "covariance": [[1, 0]\n')
    with pytest.raises(ValueError, match="line"):
        data.load_target_spec(broken, "gaussian")
    with pytest.raises(ValueError, match="malformed"):
        data.load_target_spec(g, "gmm")
