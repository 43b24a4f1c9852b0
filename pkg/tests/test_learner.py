import numpy as np
import pytest
from hypothesis import given, strategies as st

from carat.learner import (
    READ_FEATURE_ORDER,
    WRITE_FEATURE_ORDER,
    TrainingSample,
    build_features,
    label,
    read_samples_csv,
    theta_log_features,
    train,
    write_samples_csv,
)
from carat.metrics import ClientCounters, take_snapshot

MB = 1024 * 1024


def _snapshot(read_volume=0, write_volume=0):
    c = ClientCounters()
    c.read.bytes_completed = read_volume
    c.read.rpcs_completed = 1 if read_volume else 0
    c.read.pages_completed = read_volume // 4096
    c.write.bytes_completed = write_volume
    c.write.rpcs_completed = 1 if write_volume else 0
    c.write.pages_completed = write_volume // 4096
    return take_snapshot(c, 0, 500_000, 0, 1024, 8, 256)


def test_label_improvement_above_threshold():
    assert label(100 * MB, 120 * MB) == 1  # 1.20 > 1.15


def test_label_improvement_below_threshold():
    assert label(100 * MB, 110 * MB) == 0  # 1.10 <= 1.15


def test_label_zero_baseline_skipped():
    assert label(0, 50 * MB) is None


@given(
    a=st.integers(1, 10**12),
    b=st.integers(0, 10**12),
    c=st.floats(0.001, 1000.0),
)
def test_label_scale_invariance(a, b, c):
    assert label(a, b) == label(a * c, b * c)


def test_feature_orders_have_expected_layout():
    assert len(WRITE_FEATURE_ORDER) == 16
    assert len(READ_FEATURE_ORDER) == 12
    assert WRITE_FEATURE_ORDER[-4:] == ("cur_pages", "cur_window", "cand_pages", "cand_window")


def test_theta_log_features_span_unit_interval():
    assert theta_log_features(16, 1) == (0.0, 0.0)
    assert theta_log_features(1024, 256) == (1.0, 1.0)
    mid = theta_log_features(128, 16)
    assert mid == (0.5, 0.5)


def test_build_features_shape_and_candidate_columns():
    snap = _snapshot(write_volume=10 * MB)
    candidates = [(16, 1), (1024, 256)]
    rows = build_features(snap, "write", (256, 8), candidates)
    assert rows.shape == (2, 16)
    assert rows[0, -2:].tolist() == [0.0, 0.0]
    assert rows[1, -2:].tolist() == [1.0, 1.0]
    # Context columns identical across candidates.
    assert (rows[0, :-2] == rows[1, :-2]).all()


def test_train_reports_validation_and_majority_error():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(2000, 4))
    y = (X[:, 1] > 0.2).astype(float)
    model, report = train(X, y, "read", n_rounds=50, max_depth=3, seed=1)
    assert model.direction == "read"
    assert model.feature_order == [f"f{i}" for i in range(4)]
    assert report.val_error <= report.majority_error
    assert report.n_train + report.n_val == 2000


def test_train_requires_both_labels():
    X = np.zeros((10, 2))
    with pytest.raises(ValueError):
        train(X, np.ones(10), "write")


def test_sample_csv_roundtrip(tmp_path):
    samples = [
        TrainingSample("write", tuple(float(i) for i in range(16)), 1, 10.0, 20.0),
        TrainingSample("write", tuple(float(i) * 0.5 for i in range(16)), 0, 10.0, 11.0),
        TrainingSample("read", tuple(float(i) for i in range(12)), 1, 1.0, 2.0),
    ]
    path = tmp_path / "write.csv"
    n = write_samples_csv(path, samples, "write")
    assert n == 2
    X, y = read_samples_csv(path, "write")
    assert X.shape == (2, 16)
    assert y.tolist() == [1.0, 0.0]
    assert X[1, 1] == 0.5


def test_sample_csv_header_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_samples_csv(path, "write")
