from __future__ import annotations

import numpy as np

from advdrive.dataset import (
    dump_dataset,
    load_dataset,
    stack_dataset,
    synthesize_dataset,
)
from advdrive.nn import CLASS_NAMES


def test_same_seed_bit_identical():
    a = synthesize_dataset(24, seed=5)
    b = synthesize_dataset(24, seed=5)
    for la, lb in zip(a, b):
        assert la.label == lb.label
        assert la.provenance_seed == lb.provenance_seed
        assert np.array_equal(la.frame, lb.frame)


def test_different_seed_differs():
    a = synthesize_dataset(8, seed=5)
    b = synthesize_dataset(8, seed=6)
    assert any(not np.array_equal(x.frame, y.frame) for x, y in zip(a, b))


def test_classes_balanced_exactly():
    ds = synthesize_dataset(400, seed=1)
    counts = np.bincount([int(lf.label) for lf in ds], minlength=4)
    assert counts.tolist() == [100] * 4


def test_classes_balanced_within_one_for_any_n():
    ds = synthesize_dataset(10, seed=1)
    counts = np.bincount([int(lf.label) for lf in ds], minlength=4)
    assert counts.max() - counts.min() <= 1


def test_values_in_unit_interval():
    ds = synthesize_dataset(16, seed=2)
    for lf in ds:
        assert lf.frame.min() >= 0.0 and lf.frame.max() <= 1.0


def test_regressor_labels_are_lane_offsets():
    ds = synthesize_dataset(32, seed=3, task="lane_regressor")
    labels = [lf.label for lf in ds]
    assert all(-2.0 <= v <= 2.0 for v in labels)
    assert max(labels) - min(labels) > 1.0  # spread, not constant


def test_stack_dataset_shapes():
    frames, labels = stack_dataset(synthesize_dataset(8, seed=4))
    assert frames.shape == (8, 64, 64, 3)
    assert labels.shape == (8,)


def test_dump_and_load_roundtrip(tmp_path):
    ds = synthesize_dataset(6, seed=9)
    dump_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert len(back) == 6
    for orig, loaded in zip(ds, back):
        assert loaded.label == orig.label
        assert loaded.provenance_seed == orig.provenance_seed
        # 8-bit PPM quantization bound
        assert np.abs(loaded.frame - orig.frame).max() <= 0.5 / 255.0 + 1e-12


def test_class_name_order_matches_labels():
    ds = synthesize_dataset(4, seed=11)
    assert [int(lf.label) for lf in ds] == [0, 1, 2, 3]
    assert CLASS_NAMES[0] == "none"
