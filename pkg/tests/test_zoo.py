from __future__ import annotations

import numpy as np
import pytest

from advdrive.dataset import stack_dataset, synthesize_dataset
from advdrive.zoo import (
    TrainingDivergedError,
    build_model,
    evaluate,
    loss_kind_for,
    train,
)


def small_data(n=80, seed=21):
    frames, labels = stack_dataset(synthesize_dataset(n, seed))
    return frames, labels.astype(int)


def _weights_of(model):
    return [arr.copy() for _, arr in model.param_arrays()]


def test_lr_zero_leaves_weights_bit_identical():
    frames, labels = small_data(32)
    m = build_model("obstacle_classifier", seed=1)
    before = _weights_of(m)
    train(m, frames, labels, epochs=2, lr=0.0, seed=5)
    after = _weights_of(m)
    for a, b in zip(before, after):
        assert np.array_equal(a, b)
        assert a.dtype == b.dtype == np.float32


def test_same_seed_identical_weights(tmp_path):
    frames, labels = small_data(48)
    m1 = build_model("obstacle_classifier", seed=1)
    m2 = build_model("obstacle_classifier", seed=1)
    train(m1, frames, labels, epochs=2, lr=0.05, seed=7)
    train(m2, frames, labels, epochs=2, lr=0.05, seed=7)
    for (na, a), (nb, b) in zip(m1.param_arrays(), m2.param_arrays()):
        assert na == nb and np.array_equal(a, b)
    # reproducibility extends to the weight files, byte for byte
    from advdrive.weights import save_weights

    save_weights(m1, tmp_path / "a.advw")
    save_weights(m2, tmp_path / "b.advw")
    assert (tmp_path / "a.advw").read_bytes() == (tmp_path / "b.advw").read_bytes()


def test_shuffle_seed_changes_training():
    frames, labels = small_data(48)
    m1 = build_model("obstacle_classifier", seed=1)
    m2 = build_model("obstacle_classifier", seed=1)
    train(m1, frames, labels, epochs=2, lr=0.05, seed=7)
    train(m2, frames, labels, epochs=2, lr=0.05, seed=8)
    assert any(not np.array_equal(a, b)
               for (_, a), (_, b) in zip(m1.param_arrays(), m2.param_arrays()))


def test_training_reduces_loss():
    frames, labels = small_data(160, seed=13)
    m = build_model("obstacle_classifier", seed=3)
    report = train(m, frames, labels, epochs=6, lr=0.07, seed=11, batch_size=16)
    assert report.loss_curve[-1] < report.loss_curve[0]


def test_divergence_reported():
    # the floored cross-entropy cannot blow up, but the regressor's MSE can
    frames, labels = stack_dataset(synthesize_dataset(32, 17, "lane_regressor"))
    m = build_model("lane_regressor", seed=1)
    with pytest.raises(TrainingDivergedError), np.errstate(all="ignore"):
        train(m, frames, labels, epochs=10, lr=1e9, seed=5)


def test_regressor_trains_toward_lower_mse():
    frames, labels = stack_dataset(synthesize_dataset(160, 17, "lane_regressor"))
    m = build_model("lane_regressor", seed=2)
    mse_before = evaluate(m, frames, labels)
    train(m, frames, labels, epochs=6, lr=0.01, seed=3, batch_size=16)
    mse_after = evaluate(m, frames, labels)
    assert mse_after < mse_before


def test_empty_dataset_rejected():
    m = build_model("obstacle_classifier", seed=1)
    with pytest.raises(ValueError):
        train(m, np.zeros((0, 64, 64, 3)), np.zeros(0), epochs=1, lr=0.1, seed=0)


def test_loss_kind_mapping():
    assert loss_kind_for(build_model("obstacle_classifier", seed=None)) == "cross_entropy"
    assert loss_kind_for(build_model("lane_regressor", seed=None)) == "squared_error"


def test_unknown_zoo_task():
    with pytest.raises(ValueError):
        build_model("segmenter")
