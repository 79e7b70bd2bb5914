"""
Layers of the from-scratch network engine.

Convention: NCHW for image tensors, (batch, features) for dense tensors,
float64 throughout. Each layer caches what its backward pass needs during
``forward`` and fills ``grads`` (same keys as ``params``) in ``backward``.
Convolutions are valid (no padding) with stride 1; pooling windows are
non-overlapping and trailing rows/columns that do not fill a window are dropped.
"""

from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from grpcoll.core.errors import ShapeError
from grpcoll.schemas.nn import LayerKind, LayerSpec

Shape = Tuple[int, ...]


def he_uniform(shape: Shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))."""
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    spec: LayerSpec

    def __init__(self) -> None:
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}

    def output_shape(self, input_shape: Shape) -> Shape:
        return input_shape

    def forward(self, x: np.ndarray, training: bool, rng: Optional[np.random.Generator]) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.spec = LayerSpec(kind=LayerKind.DENSE, in_features=in_features, out_features=out_features)
        self.params = {
            "W": he_uniform((in_features, out_features), in_features, rng),
            "b": np.zeros(out_features),
        }

    def output_shape(self, input_shape: Shape) -> Shape:
        if input_shape != (self.spec.in_features,):
            raise ShapeError(f"dense layer expects ({self.spec.in_features},), got {input_shape}")
        return (self.spec.out_features,)

    def forward(self, x, training, rng):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads = {"W": self._x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T


class Conv2D(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        self.spec = LayerSpec(
            kind=LayerKind.CONV2D, in_channels=in_channels, out_channels=out_channels, kernel=kernel
        )
        fan_in = in_channels * kernel * kernel
        self.params = {
            "W": he_uniform((out_channels, in_channels, kernel, kernel), fan_in, rng),
            "b": np.zeros(out_channels),
        }

    def output_shape(self, input_shape: Shape) -> Shape:
        k = self.spec.kernel
        if len(input_shape) != 3 or input_shape[0] != self.spec.in_channels:
            raise ShapeError(f"conv expects ({self.spec.in_channels}, H, W), got {input_shape}")
        _, h, w = input_shape
        if h < k or w < k:
            raise ShapeError(f"{h}x{w} input is smaller than the {k}x{k} kernel")
        return (self.spec.out_channels, h - k + 1, w - k + 1)

    def forward(self, x, training, rng):
        k = self.spec.kernel
        self._x_shape = x.shape
        # (N, C, Ho, Wo, k, k)
        self._windows = sliding_window_view(x, (k, k), axis=(2, 3))
        out = np.tensordot(self._windows, self.params["W"], axes=([1, 4, 5], [1, 2, 3]))
        out += self.params["b"]
        return out.transpose(0, 3, 1, 2)

    def backward(self, dout):
        k = self.spec.kernel
        weight = self.params["W"]
        self.grads = {
            "W": np.tensordot(dout, self._windows, axes=([0, 2, 3], [0, 2, 3])),
            "b": dout.sum(axis=(0, 2, 3)),
        }
        # full correlation of the padded upstream gradient with the flipped kernel
        padded = np.pad(dout, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))
        flipped = weight[:, :, ::-1, ::-1]
        dx = np.tensordot(windows, flipped, axes=([1, 4, 5], [0, 2, 3]))
        self._windows = None
        return dx.transpose(0, 3, 1, 2)


class MaxPool2D(Layer):
    def __init__(self, pool: int = 2):
        super().__init__()
        self.spec = LayerSpec(kind=LayerKind.MAXPOOL, pool=pool)

    def output_shape(self, input_shape: Shape) -> Shape:
        p = self.spec.pool
        c, h, w = input_shape
        if h < p or w < p:
            raise ShapeError(f"{h}x{w} input is smaller than the {p}x{p} pool")
        return (c, h // p, w // p)

    def forward(self, x, training, rng):
        p = self.spec.pool
        n, c, h, w = x.shape
        ho, wo = h // p, w // p
        self._x_shape = x.shape
        blocks = (
            x[:, :, : ho * p, : wo * p]
            .reshape(n, c, ho, p, wo, p)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, ho, wo, p * p)
        )
        # argmax picks the first maximum, so ties route the gradient to one cell
        self._argmax = blocks.argmax(axis=-1)
        return np.take_along_axis(blocks, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        p = self.spec.pool
        n, c, h, w = self._x_shape
        ho, wo = dout.shape[2], dout.shape[3]
        blocks = np.zeros((n, c, ho, wo, p * p))
        np.put_along_axis(blocks, self._argmax[..., None], dout[..., None], axis=-1)
        dx = np.zeros(self._x_shape)
        dx[:, :, : ho * p, : wo * p] = (
            blocks.reshape(n, c, ho, wo, p, p).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * p, wo * p)
        )
        return dx


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self.spec = LayerSpec(kind=LayerKind.RELU)

    def forward(self, x, training, rng):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class Dropout(Layer):
    """Inverted dropout: scales kept units by 1/(1-rate) in training, identity otherwise."""

    def __init__(self, rate: float):
        super().__init__()
        self.spec = LayerSpec(kind=LayerKind.DROPOUT, rate=rate)

    def forward(self, x, training, rng):
        rate = self.spec.rate
        if not training or rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs a generator")
        self._mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Flatten(Layer):
    def __init__(self):
        super().__init__()
        self.spec = LayerSpec(kind=LayerKind.FLATTEN)

    def output_shape(self, input_shape: Shape) -> Shape:
        return (int(np.prod(input_shape)),)

    def forward(self, x, training, rng):
        self._x_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._x_shape)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class Softmax(Layer):
    """Classification head. Training differentiates through the logits, not this layer."""

    def __init__(self):
        super().__init__()
        self.spec = LayerSpec(kind=LayerKind.SOFTMAX)

    def forward(self, x, training, rng):
        self._p = softmax(x)
        return self._p

    def backward(self, dout):
        p = self._p
        return p * (dout - (dout * p).sum(axis=1, keepdims=True))
