from __future__ import annotations

import time
from types import SimpleNamespace

import pytest

from advdrive.dataset import stack_dataset, synthesize_dataset
from advdrive.weights import save_weights
from advdrive.zoo import build_model, train

# Frozen training recipe: validated once, kept as the regression configuration.
TRAIN_CONFIG = dict(n=2000, data_seed=7, model_seed=3, train_seed=11,
                    epochs=12, lr=0.07, batch_size=16)
TEST_SET_SEED = 99


@pytest.fixture(scope="session")
def trained_bundle(tmp_path_factory):
    """The frozen trained classifier shared by attack and acceptance tests."""
    t0 = time.monotonic()
    ds = synthesize_dataset(TRAIN_CONFIG["n"], TRAIN_CONFIG["data_seed"],
                            "obstacle_classifier")
    frames, labels = stack_dataset(ds)
    labels = labels.astype(int)
    model = build_model("obstacle_classifier", seed=TRAIN_CONFIG["model_seed"])
    report = train(model, frames, labels, epochs=TRAIN_CONFIG["epochs"],
                   lr=TRAIN_CONFIG["lr"], seed=TRAIN_CONFIG["train_seed"],
                   batch_size=TRAIN_CONFIG["batch_size"])
    train_seconds = time.monotonic() - t0
    test_ds = synthesize_dataset(200, TEST_SET_SEED, "obstacle_classifier")
    test_frames, test_labels = stack_dataset(test_ds)
    weights_path = tmp_path_factory.mktemp("zoo") / "classifier.advw"
    save_weights(model, weights_path)
    return SimpleNamespace(
        model=model,
        report=report,
        train_seconds=train_seconds,
        test_frames=test_frames,
        test_labels=test_labels.astype(int),
        weights_path=str(weights_path),
    )


@pytest.fixture()
def classifier_rand():
    return build_model("obstacle_classifier", seed=1)


@pytest.fixture()
def regressor_rand():
    return build_model("lane_regressor", seed=2)
