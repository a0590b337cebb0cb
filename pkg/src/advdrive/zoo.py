"""Model zoo: desk-scale perception architectures, seeded init, SGD training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Conv2d, Dense, Flatten, MaxPool2, Model, Relu, Softmax, batch_loss, backward_params
from .weights import layer_repr

INPUT_SHAPE = (64, 64, 3)

# arch entries: ("conv2d", k, stride, out_ch) | ("dense", out) | bare kinds
ZOO_ARCHS = {
    "obstacle_classifier": [
        ("conv2d", 5, 2, 8), ("relu",), ("maxpool",),
        ("conv2d", 3, 2, 16), ("relu",), ("flatten",),
        ("dense", 64), ("relu",), ("dense", 4), ("softmax",),
    ],
    "lane_regressor": [
        ("conv2d", 5, 2, 6), ("relu",), ("maxpool",), ("flatten",),
        ("dense", 32), ("relu",), ("dense", 1),
    ],
}


class TrainingDivergedError(RuntimeError):
    pass


def build_model(task: str, seed: int | None = 0,
                input_shape: tuple[int, int, int] = INPUT_SHAPE) -> Model:
    """Build a zoo model; seed=None gives all-zero weights (test fixture)."""
    if task not in ZOO_ARCHS:
        raise ValueError(f"unknown zoo task {task!r}; have {sorted(ZOO_ARCHS)}")
    rng = None if seed is None else np.random.default_rng(seed)
    layers: list = []
    shape = input_shape
    flat: int | None = None
    for spec in ZOO_ARCHS[task]:
        kind = spec[0]
        if kind == "conv2d":
            _, k, s, out_ch = spec
            layer = Conv2d(k, s, shape[2], out_ch, rng=rng)
            shape = layer.out_shape(shape)
        elif kind == "maxpool":
            layer = MaxPool2()
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif kind == "relu":
            layer = Relu()
        elif kind == "flatten":
            layer = Flatten()
            flat = shape[0] * shape[1] * shape[2]
        elif kind == "dense":
            assert flat is not None, "dense before flatten"
            layer = Dense(flat, spec[1], rng=rng)
            flat = spec[1]
        elif kind == "softmax":
            layer = Softmax()
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        layers.append(layer)
    specs = [{"kind": layer_repr(l).split("(")[0], "repr": layer_repr(l)}
             for l in layers]
    return Model(task=task, input_shape=input_shape, layers=layers,
                 layer_specs=specs)


def loss_kind_for(model: Model) -> str:
    return "cross_entropy" if model.task == "obstacle_classifier" else "squared_error"


@dataclass
class TrainReport:
    epochs: int
    final_loss: float
    final_metric: float  # accuracy for classifiers, MSE for regressors
    loss_curve: list[float]


def evaluate(model: Model, frames: np.ndarray, labels: np.ndarray,
             batch_size: int = 64) -> float:
    """Accuracy (classifier) or MSE (regressor) over a frame stack."""
    n = frames.shape[0]
    if model.task == "obstacle_classifier":
        correct = 0
        for i in range(0, n, batch_size):
            out, _ = model.forward(frames[i : i + batch_size])
            correct += int((out.argmax(axis=1) == labels[i : i + batch_size]).sum())
        return correct / n
    total = 0.0
    for i in range(0, n, batch_size):
        out, _ = model.forward(frames[i : i + batch_size])
        d = out[:, 0] - labels[i : i + batch_size]
        total += float((d * d).sum())
    return total / n


def train(model: Model, frames: np.ndarray, labels: np.ndarray, epochs: int,
          lr: float, seed: int, batch_size: int = 32) -> TrainReport:
    """Minibatch SGD, deterministic in (initial weights, data, seed).

    Mutates `model` in place and returns the report; lr = 0 leaves every
    weight bit-identical.
    """
    kind = loss_kind_for(model)
    n = frames.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(seed)
    curve: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for i in range(0, n, batch_size):
            idx = order[i : i + batch_size]
            out, cache = model.forward(frames[idx])
            lval = batch_loss(out, labels[idx], kind)
            if not np.isfinite(lval):
                raise TrainingDivergedError(f"non-finite loss {lval}")
            epoch_loss += lval
            n_batches += 1
            grads = backward_params(model, cache, labels[idx], kind)
            for layer, pg in zip(model.layers, grads):
                for pname, g in pg.items():
                    cur = getattr(layer, pname)
                    upd = cur.astype(np.float64) - lr * g
                    setattr(layer, pname, upd.astype(np.float32))
        curve.append(epoch_loss / max(1, n_batches))
    metric = evaluate(model, frames, labels)
    return TrainReport(epochs=epochs, final_loss=curve[-1] if curve else float("nan"),
                       final_metric=metric, loss_curve=curve)
