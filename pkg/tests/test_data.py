import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from topovae.config import ConfigError, ExperimentConfig, LatentSplit, TrainSchedule, preset
from topovae.data import DataError, PointCloud, load_csv, rng_stream, save_csv


def test_load_simple(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x0,x1\n1.0,0.0\n0.0,1.0\n")
    cloud = load_csv(p)
    assert cloud.n == 2 and cloud.dim == 2
    np.testing.assert_array_equal(cloud.points, [[1.0, 0.0], [0.0, 1.0]])


def test_non_numeric_cell_names_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x0,x1\n1.0,abc\n")
    with pytest.raises(DataError, match=":2:"):
        load_csv(p)


def test_ragged_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x0,x1\n1.0,2.0\n3.0\n")
    with pytest.raises(DataError, match=":3: expected 2 fields"):
        load_csv(p)


def test_empty_body(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x0,x1\n")
    with pytest.raises(DataError, match="no data rows"):
        load_csv(p)


def test_bad_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="header"):
        load_csv(p)


def test_save_single_row(tmp_path):
    p = tmp_path / "d.csv"
    save_csv(PointCloud([[1.5, 0.25, 0.0]]), p)
    assert p.read_text().splitlines() == ["x0,x1,x2", "1.5,0.25,0.0"]


def test_empty_cloud_rejected():
    with pytest.raises(DataError):
        PointCloud(np.zeros((0, 3)))


def test_nan_rejected():
    with pytest.raises(DataError):
        PointCloud([[1.0, float("nan")]])


def test_metadata_round_trip(tmp_path):
    p = tmp_path / "d.csv"
    save_csv(PointCloud([[1.0]], {"system": "orbit", "seed": "7"}), p)
    assert p.read_text().startswith("# seed=7\n# system=orbit\nx0\n")
    assert load_csv(p).meta == {"system": "orbit", "seed": "7"}


def test_canonical_body_is_byte_identical(tmp_path):
    src = tmp_path / "a.csv"
    src.write_text("# system=qubit\nx0,x1\n0.1,-2.5e-17\n3.0,1e+300\n")
    dst = tmp_path / "b.csv"
    save_csv(load_csv(src), dst)
    assert dst.read_bytes() == src.read_bytes()


def test_save_to_missing_dir_has_path_context(tmp_path):
    bad = tmp_path / "nope" / "d.csv"
    with pytest.raises(OSError, match="nope"):
        save_csv(PointCloud([[1.0]]), bad)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_round_trip_exact(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    save_csv(PointCloud(values), p)
    back = load_csv(p).points
    # shortest repr round-trips exactly, well inside the 1 ulp contract
    np.testing.assert_array_equal(back, values)


def test_rng_labels_give_distinct_streams():
    a = rng_stream(42, "batch").random(4)
    b = rng_stream(42, "weights").random(4)
    assert a[0] != b[0]


def test_rng_deterministic():
    np.testing.assert_array_equal(rng_stream(5, "x").random(100), rng_stream(5, "x").random(100))


def test_rng_seed_changes_stream():
    assert not np.array_equal(rng_stream(42, "batch").random(8), rng_stream(43, "batch").random(8))


def test_rng_frozen_values():
    # pins the stream so a silent change of generator or key derivation shows up
    r = rng_stream(42, "batch").integers(0, 2**32, size=3)
    assert r.tolist() == FROZEN_42_BATCH


FROZEN_42_BATCH = [2524988879, 765375332, 3633624715]


def test_config_invariants():
    with pytest.raises(ConfigError):
        ExperimentConfig("oscillator", n_samples=50)  # batch 100 > 50 samples
    with pytest.raises(ConfigError):
        ExperimentConfig("oscillator", beta=-1.0)
    with pytest.raises(ConfigError):
        ExperimentConfig("pendulum")
    with pytest.raises(ConfigError):
        LatentSplit(3, 1, "circle")


def test_config_json_round_trip(tmp_path):
    cfg = preset("orbit", seed=3, training=TrainSchedule(iterations=10))
    cfg.save(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json") == cfg
