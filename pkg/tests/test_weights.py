from __future__ import annotations

import struct

import numpy as np
import pytest

from advdrive.nn import ShapeMismatchError
from advdrive.weights import (
    MAGIC,
    BadMagicError,
    TruncatedFileError,
    VersionMismatchError,
    WeightFormatError,
    load_weights,
    save_weights,
)
from advdrive.zoo import build_model


def test_roundtrip_bit_identical(tmp_path):
    for task in ("obstacle_classifier", "lane_regressor"):
        m = build_model(task, seed=4)
        p = tmp_path / f"{task}.advw"
        save_weights(m, p)
        m2 = load_weights(p)
        assert m2.task == m.task
        assert m2.input_shape == m.input_shape
        assert len(m2.layers) == len(m.layers)
        for (na, a), (nb, b) in zip(m.param_arrays(), m2.param_arrays()):
            assert na == nb
            assert a.dtype == b.dtype == np.float32
            assert np.array_equal(a, b)
        # save -> load -> save reproduces the file byte for byte
        p2 = tmp_path / f"{task}2.advw"
        save_weights(m2, p2)
        assert p.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    m = build_model("lane_regressor", seed=0)
    p = tmp_path / "m.advw"
    save_weights(m, p)
    raw = bytearray(p.read_bytes())
    raw[:4] = b"NOPE"
    p.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        load_weights(p)


def test_version_mismatch(tmp_path):
    m = build_model("lane_regressor", seed=0)
    p = tmp_path / "m.advw"
    save_weights(m, p)
    raw = bytearray(p.read_bytes())
    raw[4:8] = struct.pack("<I", 9)
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        load_weights(p)


def test_truncation(tmp_path):
    m = build_model("obstacle_classifier", seed=0)
    p = tmp_path / "m.advw"
    save_weights(m, p)
    raw = p.read_bytes()
    p.write_bytes(raw[: len(raw) - 10])
    with pytest.raises(TruncatedFileError):
        load_weights(p)


def _entry(name: str, arr: np.ndarray | None) -> bytes:
    nb = name.encode()
    out = struct.pack("<H", len(nb)) + nb
    if arr is None:
        return out + struct.pack("<B", 0)
    out += struct.pack("<B", arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return out + arr.astype("<f4").tobytes()


def _file(entries: list[bytes]) -> bytes:
    return MAGIC + struct.pack("<II", 1, len(entries)) + b"".join(entries)


def test_edited_dims_raise_shape_error(tmp_path):
    # dims say (3, 2) but the layer repr declares dense(4, 2)
    p = tmp_path / "bad.advw"
    p.write_bytes(_file([
        _entry("meta:lane_regressor:1x1x4", None),
        _entry("00:flatten:", None),
        _entry("01:dense(4,2):w", np.zeros((3, 2))),
        _entry("01:dense(4,2):b", np.zeros(2)),
    ]))
    with pytest.raises(ShapeMismatchError):
        load_weights(p)


def test_unknown_param_name_rejected(tmp_path):
    p = tmp_path / "bad.advw"
    p.write_bytes(_file([
        _entry("meta:lane_regressor:1x1x4", None),
        _entry("00:flatten:", None),
        _entry("01:dense(4,2):zz", np.zeros((4, 2))),
    ]))
    with pytest.raises(WeightFormatError):
        load_weights(p)


def test_missing_meta_rejected(tmp_path):
    p = tmp_path / "bad.advw"
    p.write_bytes(_file([_entry("00:flatten:", None)]))
    with pytest.raises(WeightFormatError):
        load_weights(p)


def test_stack_inconsistency_rejected(tmp_path):
    # dense input does not match what the stack provides (flatten of 1x1x4 = 4)
    p = tmp_path / "bad.advw"
    p.write_bytes(_file([
        _entry("meta:lane_regressor:1x1x4", None),
        _entry("00:flatten:", None),
        _entry("01:dense(9,2):w", np.zeros((9, 2))),
        _entry("01:dense(9,2):b", np.zeros(2)),
    ]))
    with pytest.raises(ShapeMismatchError):
        load_weights(p)
