import json

import numpy as np
import pytest

from carat.gbdt import GbdtClassifier, ModelFormatError, load_model, save_model


def _separable_set(n=10_000, seed=0):
    # Two clusters split cleanly along a linear boundary of two features.
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(float)
    return X, y


def test_separable_dataset_low_heldout_error():
    X, y = _separable_set()
    split = int(0.8 * len(X))
    model = GbdtClassifier(n_rounds=200, max_depth=4, learning_rate=0.1)
    model.fit(X[:split], y[:split])
    pred = (model.predict_proba(X[split:]) > 0.5).astype(float)
    err = float(np.mean(pred != y[split:]))
    assert err <= 0.05


def test_training_loss_never_increases():
    X, y = _separable_set(n=2000, seed=1)
    model = GbdtClassifier(n_rounds=60, max_depth=3).fit(X, y)
    losses = model.train_losses_
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_majority_fit_on_near_constant_data():
    X = np.zeros((101, 2))
    X[-1, 0] = 1.0
    y = np.ones(101)
    y[-1] = 0.0
    model = GbdtClassifier(n_rounds=20, max_depth=2, min_samples_leaf=1).fit(X, y)
    assert model.predict_proba(np.zeros((1, 2)))[0] > 0.5


def test_single_class_dataset_rejected():
    X = np.zeros((10, 2))
    with pytest.raises(ValueError):
        GbdtClassifier().fit(X, np.ones(10))


def test_empty_ensemble_with_zero_base_outputs_half():
    model = GbdtClassifier()
    assert model.predict_proba(np.array([[1.0, 2.0, 3.0]]))[0] == 0.5


def test_inference_is_deterministic():
    X, y = _separable_set(n=500, seed=2)
    model = GbdtClassifier(n_rounds=30).fit(X, y)
    probe = np.random.default_rng(3).normal(size=(50, 2))
    assert (model.predict_proba(probe) == model.predict_proba(probe)).all()


def test_depth_one_stump_respects_feature_direction():
    # Label correlates positively with feature 0; a single stump must put the
    # larger leaf value on the high side of its split.
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(400, 1))
    y = (X[:, 0] > 0.5).astype(float)
    model = GbdtClassifier(n_rounds=1, max_depth=1, learning_rate=1.0).fit(X, y)
    tree = model.trees_[0]
    assert tree.feature[0] == 0
    low = model.predict_proba(np.array([[0.0]]))[0]
    high = model.predict_proba(np.array([[1.0]]))[0]
    assert high > low


def test_save_load_roundtrip_bitexact(tmp_path):
    X, y = _separable_set(n=800, seed=5)
    model = GbdtClassifier(n_rounds=40, max_depth=3).fit(X, y)
    model.direction = "write"
    model.feature_order = ["a", "b"]
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    probe = np.random.default_rng(6).normal(size=(100, 2))
    assert (model.predict_proba(probe) == loaded.predict_proba(probe)).all()
    assert loaded.direction == "write"
    assert loaded.feature_order == ["a", "b"]


def test_truncated_file_fails_to_load(tmp_path):
    X, y = _separable_set(n=100, seed=7)
    model = GbdtClassifier(n_rounds=5).fit(X, y)
    path = tmp_path / "model.json"
    save_model(model, path)
    blob = path.read_text()
    path.write_text(blob[: len(blob) // 2])
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_version_mismatch_is_an_explicit_error(tmp_path):
    X, y = _separable_set(n=100, seed=8)
    model = GbdtClassifier(n_rounds=5).fit(X, y)
    doc = model.to_dict()
    doc["format_version"] = 999
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(path)


def test_feature_length_mismatch_rejected():
    X, y = _separable_set(n=100, seed=9)
    model = GbdtClassifier(n_rounds=5).fit(X, y)
    model.feature_order = ["a", "b"]
    with pytest.raises(ValueError, match="feature length"):
        model.predict_proba(np.zeros((1, 3)))


def test_get_set_params_roundtrip():
    model = GbdtClassifier(n_rounds=10)
    params = model.get_params()
    assert params["n_rounds"] == 10
    model.set_params(n_rounds=20, max_depth=2)
    assert model.n_rounds == 20 and model.max_depth == 2
    with pytest.raises(ValueError):
        model.set_params(bogus=1)
