"""Model weight file format.

Layout (all integers little-endian):

    magic   4 bytes  b"ADVW"
    version u32      = 1
    count   u32      number of entries
    entry*  name     u16 length + UTF-8 bytes
            rank     u8
            dims     rank * u32
            payload  prod(dims) * float32 (little-endian, raw)

Entry names encode the architecture so a file alone rebuilds its model:
a leading rank-0 meta entry "meta:<task>:<H>x<W>x<C>", then one entry per
layer parameter named "<layer index>:<layer repr>:<param>". Parameter-free
layers contribute a rank-0 entry with an empty param field, e.g. "02:relu:".
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import (
    Conv2d,
    Dense,
    Flatten,
    MaxPool2,
    Model,
    Relu,
    ShapeMismatchError,
    Softmax,
)

MAGIC = b"ADVW"
VERSION = 1


class WeightFormatError(ValueError):
    pass


class BadMagicError(WeightFormatError):
    pass


class VersionMismatchError(WeightFormatError):
    pass


class TruncatedFileError(WeightFormatError):
    pass


def layer_repr(layer) -> str:
    if isinstance(layer, Conv2d):
        return f"conv2d({layer.kernel},{layer.stride},{layer.in_ch},{layer.out_ch})"
    if isinstance(layer, Dense):
        return f"dense({layer.in_dim},{layer.out_dim})"
    if isinstance(layer, Relu):
        return "relu"
    if isinstance(layer, MaxPool2):
        return "maxpool"
    if isinstance(layer, Flatten):
        return "flatten"
    if isinstance(layer, Softmax):
        return "softmax"
    raise ValueError(f"unknown layer type {type(layer).__name__}")


def _layer_from_repr(text: str):
    if text.startswith("conv2d(") and text.endswith(")"):
        k, s, ci, co = (int(v) for v in text[7:-1].split(","))
        return Conv2d(k, s, ci, co)
    if text.startswith("dense(") and text.endswith(")"):
        i, o = (int(v) for v in text[6:-1].split(","))
        return Dense(i, o)
    plain = {"relu": Relu, "maxpool": MaxPool2, "flatten": Flatten,
             "softmax": Softmax}
    if text in plain:
        return plain[text]()
    raise WeightFormatError(f"unparseable layer repr {text!r}")


def save_weights(model: Model, path: str | Path) -> None:
    entries: list[tuple[str, np.ndarray | None]] = []
    h, w, c = model.input_shape
    entries.append((f"meta:{model.task}:{h}x{w}x{c}", None))
    for i, layer in enumerate(model.layers):
        rep = layer_repr(layer)
        params = layer.params()
        if not params:
            entries.append((f"{i:02d}:{rep}:", None))
        for pname in sorted(params):
            entries.append((f"{i:02d}:{rep}:{pname}", params[pname]))

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(entries)))
        for name, arr in entries:
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            if arr is None:
                f.write(struct.pack("<B", 0))
            else:
                f.write(struct.pack("<B", arr.ndim))
                f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"need {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def read_entries(path: str | Path) -> list[tuple[str, np.ndarray | None]]:
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4) != MAGIC:
        raise BadMagicError(f"{path}: bad magic")
    version, count = struct.unpack("<II", r.take(8))
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    entries: list[tuple[str, np.ndarray | None]] = []
    for _ in range(count):
        (nlen,) = struct.unpack("<H", r.take(2))
        name = r.take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", r.take(1))
        if rank == 0:
            entries.append((name, None))
            continue
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n_vals = 1
        for d in dims:
            n_vals *= d
        payload = r.take(4 * n_vals)
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        entries.append((name, arr))
    return entries


def load_weights(path: str | Path) -> Model:
    """Rebuild a model from a weight file; bit-identical to what was saved."""
    entries = read_entries(path)
    if not entries or not entries[0][0].startswith("meta:"):
        raise WeightFormatError(f"{path}: missing meta entry")
    _, task, dims_text = entries[0][0].split(":")
    h, w, c = (int(v) for v in dims_text.split("x"))

    layers: list = []
    reprs: list[str] = []
    arrays: dict[tuple[int, str], np.ndarray] = {}
    for name, arr in entries[1:]:
        idx_text, rep, pname = name.split(":")
        idx = int(idx_text)
        if idx == len(layers):
            layers.append(_layer_from_repr(rep))
            reprs.append(rep)
        elif idx > len(layers) or reprs[idx] != rep:
            raise WeightFormatError(f"{path}: inconsistent layer ordering at {name!r}")
        if pname:
            arrays[(idx, pname)] = arr

    model = Model(task=task, input_shape=(h, w, c), layers=layers,
                  layer_specs=[{"kind": rep.split("(")[0], "repr": rep}
                               for rep in reprs])
    for (idx, pname), arr in arrays.items():
        params = layers[idx].params()
        if pname not in params:
            raise WeightFormatError(f"{path}: layer {idx} has no param {pname!r}")
        if params[pname].shape != arr.shape:
            raise ShapeMismatchError(
                f"{path}: layer {idx} param {pname} shape {arr.shape}, "
                f"expected {params[pname].shape}"
            )
        setattr(layers[idx], pname, arr)
    _validate_stack(model)
    return model


def _validate_stack(model: Model) -> None:
    """Shape-propagate through the stack to catch edited dims early."""
    shape = model.input_shape
    flat: int | None = None
    for layer in model.layers:
        if isinstance(layer, Conv2d):
            if flat is not None:
                raise ShapeMismatchError("conv after flatten")
            shape = layer.out_shape(shape)
        elif isinstance(layer, MaxPool2):
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif isinstance(layer, Flatten):
            flat = shape[0] * shape[1] * shape[2]
        elif isinstance(layer, Dense):
            if flat is None:
                raise ShapeMismatchError("dense before flatten")
            if layer.in_dim != flat:
                raise ShapeMismatchError(
                    f"dense expects {layer.in_dim}, stack provides {flat}"
                )
            flat = layer.out_dim
