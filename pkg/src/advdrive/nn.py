"""Small layered perception networks: forward with activation cache, loss,
input-gradient backward, and parameter gradients for SGD.

Conventions
-----------
* Inputs are channels-last: a batch is (N, H, W, C). A single sensor frame
  (H, W, 3) is lifted to a batch of one.
* Weights are stored float32 (the weight-file payload type); all arithmetic
  runs in float64 so that finite-difference checks of the input and texture
  gradients hold to tight tolerances. Parameter updates cast back to float32.
* forward() is deterministic and the cache it returns holds every
  intermediate needed by backward; caches are per-call values, never shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CLASS_NAMES = ("none", "car", "truck", "pedestrian")
LOSS_FLOOR = 1e-12  # inside log; keeps confident mistakes finite


class ShapeMismatchError(ValueError):
    pass


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
            fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class Conv2d:
    """Valid convolution, stride >= 1, channels-last; weight (k, k, Cin, Cout)."""

    def __init__(self, kernel: int, stride: int, in_ch: int, out_ch: int,
                 rng: np.random.Generator | None = None):
        self.kernel = kernel
        self.stride = stride
        self.in_ch = in_ch
        self.out_ch = out_ch
        fan_in = kernel * kernel * in_ch
        fan_out = kernel * kernel * out_ch
        if rng is None:
            self.w = np.zeros((kernel, kernel, in_ch, out_ch), dtype=np.float32)
        else:
            self.w = _glorot(rng, (kernel, kernel, in_ch, out_ch), fan_in, fan_out)
        self.b = np.zeros(out_ch, dtype=np.float32)

    def out_shape(self, in_shape: tuple[int, int, int]) -> tuple[int, int, int]:
        h, w, c = in_shape
        if c != self.in_ch:
            raise ShapeMismatchError(f"conv expects {self.in_ch} channels, got {c}")
        ho = (h - self.kernel) // self.stride + 1
        wo = (w - self.kernel) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeMismatchError("conv output collapses to zero size")
        return ho, wo, self.out_ch

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        k, s = self.kernel, self.stride
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
        win = win[:, ::s, ::s]  # (N, Ho, Wo, C, k, k)
        return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))  # (..., k, k, C)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        n = x.shape[0]
        ho, wo, _ = self.out_shape(x.shape[1:])
        cols = self._im2col(x).reshape(n * ho * wo, -1)
        wmat = self.w.astype(np.float64).reshape(-1, self.out_ch)
        y = cols @ wmat + self.b.astype(np.float64)
        return y.reshape(n, ho, wo, self.out_ch), {"cols": cols, "in_shape": x.shape}

    def backward(self, grad: np.ndarray, cache: dict
                 ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        n, ho, wo, _ = grad.shape
        g = grad.reshape(n * ho * wo, self.out_ch)
        cols = cache["cols"]
        dw = (cols.T @ g).reshape(self.w.shape)
        db = g.sum(axis=0)
        wmat = self.w.astype(np.float64).reshape(-1, self.out_ch)
        dcols = (g @ wmat.T).reshape(n, ho, wo, self.kernel, self.kernel, self.in_ch)
        dx = np.zeros(cache["in_shape"], dtype=np.float64)
        k, s = self.kernel, self.stride
        # fold windows back; looping over the k*k offsets keeps the scatter
        # additions in a fixed order (bit-deterministic)
        for i in range(k):
            for j in range(k):
                dx[:, i : i + ho * s : s, j : j + wo * s : s, :] += dcols[:, :, :, i, j, :]
        return dx, {"w": dw, "b": db}

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}


class Relu:
    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        return np.maximum(x, 0.0), {"x": x}

    def backward(self, grad, cache):
        return grad * (cache["x"] > 0.0), {}

    def params(self) -> dict[str, np.ndarray]:
        return {}


class MaxPool2:
    """Non-overlapping 2x2 max pool; trailing odd rows/cols are dropped."""

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        n, h, w, c = x.shape
        ho, wo = h // 2, w // 2
        xt = x[:, : ho * 2, : wo * 2, :]
        win = xt.reshape(n, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4)
        flat = win.reshape(n, ho, wo, c, 4)
        idx = flat.argmax(axis=-1)  # first max wins on ties
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        return y, {"idx": idx, "in_shape": x.shape}

    def backward(self, grad, cache):
        n, ho, wo, c = grad.shape
        flat = np.zeros((n, ho, wo, c, 4), dtype=np.float64)
        np.put_along_axis(flat, cache["idx"][..., None], grad[..., None], axis=-1)
        win = flat.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros(cache["in_shape"], dtype=np.float64)
        dx[:, : ho * 2, : wo * 2, :] = win.reshape(n, ho * 2, wo * 2, c)
        return dx, {}

    def params(self) -> dict[str, np.ndarray]:
        return {}


class Flatten:
    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        return x.reshape(x.shape[0], -1), {"in_shape": x.shape}

    def backward(self, grad, cache):
        return grad.reshape(cache["in_shape"]), {}

    def params(self) -> dict[str, np.ndarray]:
        return {}


class Dense:
    def __init__(self, in_dim: int, out_dim: int,
                 rng: np.random.Generator | None = None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            self.w = np.zeros((in_dim, out_dim), dtype=np.float32)
        else:
            self.w = _glorot(rng, (in_dim, out_dim), in_dim, out_dim)
        self.b = np.zeros(out_dim, dtype=np.float32)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        if x.shape[1] != self.in_dim:
            raise ShapeMismatchError(f"dense expects {self.in_dim}, got {x.shape[1]}")
        return x @ self.w.astype(np.float64) + self.b.astype(np.float64), {"x": x}

    def backward(self, grad, cache):
        dw = cache["x"].T @ grad
        db = grad.sum(axis=0)
        dx = grad @ self.w.astype(np.float64).T
        return dx, {"w": dw, "b": db}

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}


class Softmax:
    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        return p, {"p": p}

    def backward(self, grad, cache):
        # generic Jacobian-vector product; unused when the cross-entropy head
        # gradient is fused, kept for completeness
        p = cache["p"]
        dot = (grad * p).sum(axis=1, keepdims=True)
        return p * (grad - dot), {}

    def params(self) -> dict[str, np.ndarray]:
        return {}


@dataclass
class Cache:
    """Activation record of one forward() call."""

    layer_caches: list
    output: np.ndarray  # batched head output (N, D)
    batch: int


@dataclass
class Model:
    """A layer stack plus its task head.

    task: 'obstacle_classifier' (softmax over CLASS_NAMES) or
    'lane_regressor' (linear scalar head, lateral lane offset in meters).
    """

    task: str
    input_shape: tuple[int, int, int]
    layers: list = field(default_factory=list)
    layer_specs: list[dict] = field(default_factory=list)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Cache]:
        """x: (N, H, W, C) or a single (H, W, C) frame. Returns (output, cache)."""
        single = x.ndim == 3
        if single:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatchError(
                f"input {x.shape[1:]} does not match model input {self.input_shape}"
            )
        # pixels arrive in [0, 1]; center them so first-layer activations are
        # sign-balanced (the shift is linear, so input gradients are unaffected)
        x = np.asarray(x, dtype=np.float64) - 0.5
        layer_caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            layer_caches.append(c)
        cache = Cache(layer_caches=layer_caches, output=x, batch=x.shape[0])
        return (x[0] if single else x), cache

    def predict(self, frame: np.ndarray):
        """PerceptionOutput for one frame: probability vector or scalar offset."""
        out, _ = self.forward(frame)
        return out if self.task == "obstacle_classifier" else float(out[0])

    def head_is_softmax(self) -> bool:
        return bool(self.layers) and isinstance(self.layers[-1], Softmax)

    def param_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for pname, arr in layer.params().items():
                out.append((f"{i:02d}:{self.layer_specs[i]['repr']}:{pname}", arr))
        return out


def loss(output: np.ndarray, label, kind: str) -> float:
    """Single-sample loss.

    cross_entropy: -log p[label] with p floored at 1e-12;
    squared_error: (pred - label)^2.
    """
    out = np.asarray(output, dtype=np.float64).reshape(-1)
    if kind == "cross_entropy":
        label = int(label)
        if not (0 <= label < out.shape[0]):
            raise ValueError(f"label {label} out of range for {out.shape[0]} classes")
        return -math.log(max(float(out[label]), LOSS_FLOOR))
    if kind == "squared_error":
        return (float(out[0]) - float(label)) ** 2
    raise ValueError(f"unknown loss kind {kind!r}")


def batch_loss(output: np.ndarray, labels: np.ndarray, kind: str) -> float:
    """Mean loss over a batch (training/eval helper)."""
    out = np.asarray(output, dtype=np.float64)
    n = out.shape[0]
    if kind == "cross_entropy":
        p = np.maximum(out[np.arange(n), np.asarray(labels, dtype=np.int64)], LOSS_FLOOR)
        return float(-np.log(p).mean())
    diff = out[:, 0] - np.asarray(labels, dtype=np.float64)
    return float((diff * diff).mean())


def _head_gradient(output: np.ndarray, labels: np.ndarray, kind: str,
                   mean: bool) -> tuple[np.ndarray, bool]:
    """Loss gradient at the head; `fused` means the terminal softmax backward
    is already folded in (gradient is w.r.t. the softmax input)."""
    out = np.asarray(output, dtype=np.float64)
    n = out.shape[0]
    scale = 1.0 / n if mean else 1.0
    if kind == "cross_entropy":
        labels = np.asarray(labels, dtype=np.int64)
        g = out.copy()
        g[np.arange(n), labels] -= 1.0
        # samples pinned at the loss floor have constant loss, hence zero grad
        floored = out[np.arange(n), labels] < LOSS_FLOOR
        g[floored] = 0.0
        return g * scale, True
    diff = out[:, :1] - np.asarray(labels, dtype=np.float64).reshape(n, 1)
    g = np.zeros_like(out)
    g[:, :1] = 2.0 * diff * scale
    return g, False


def _backprop(model: Model, cache: Cache, labels, kind: str, mean: bool,
              want_params: bool) -> tuple[np.ndarray, list[dict]]:
    if kind == "cross_entropy" and not model.head_is_softmax():
        raise ValueError("cross_entropy needs a softmax head")
    labels = np.atleast_1d(labels)
    if labels.shape[0] != cache.batch:
        raise ValueError("label count does not match cached batch")
    g, fused = _head_gradient(cache.output, labels, kind, mean)
    start = len(model.layers) - 1
    if fused:
        start -= 1  # softmax folded into the head gradient
    param_grads: list[dict] = [{} for _ in model.layers]
    for i in range(start, -1, -1):
        g, pg = model.layers[i].backward(g, cache.layer_caches[i])
        if want_params:
            param_grads[i] = pg
    return g, param_grads


def backward_input(model: Model, cache: Cache, label, kind: str) -> np.ndarray:
    """Gradient of the single-sample loss w.r.t. the input frame."""
    if cache.batch != 1:
        raise ValueError("backward_input expects a cache from a single-frame forward")
    g, _ = _backprop(model, cache, label, kind, mean=False, want_params=False)
    return g[0]


def backward_params(model: Model, cache: Cache, labels, kind: str) -> list[dict]:
    """Mean-loss parameter gradients for a batch, ordered like model.layers."""
    _, pg = _backprop(model, cache, labels, kind, mean=True, want_params=True)
    return pg
