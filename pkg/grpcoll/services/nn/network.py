"""
Layered classifier and the architectures used by the experiments.

A model accepts flat (n, input_dim) batches. Image models pad each row with
zeros up to the next perfect square and reshape it to (1, s, s), so a
projected MNIST vector of any length k > 225 (side 16) feeds the same conv
stack.
"""

import copy
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from grpcoll.core.config import settings
from grpcoll.core.errors import ShapeError
from grpcoll.core.seeding import make_rng
from grpcoll.schemas.nn import ModelSummary
from grpcoll.services.nn.layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2D,
    ReLU,
    Shape,
    Softmax,
)


class NetworkModel:
    """
    An ordered stack of layers ending in a softmax head.

    Layers cache their inputs on themselves during ``forward`` for the next
    ``backward``, so one model instance is not safe for concurrent forward
    passes. Callers sharing a model across threads serialise access to it
    (the coordinator holds its model lock around every classification).
    """

    def __init__(
        self,
        name: str,
        layers: List[Layer],
        input_dim: int,
        input_shape: Shape,
        class_count: int,
    ):
        if not layers or not isinstance(layers[-1], Softmax):
            raise ShapeError("a model must end with a softmax head")
        if int(np.prod(input_shape)) < input_dim:
            raise ShapeError(f"input shape {input_shape} cannot hold {input_dim} values")
        shape = input_shape
        for layer in layers:
            shape = layer.output_shape(shape)
        if shape != (class_count,):
            raise ShapeError(f"model outputs {shape}, expected ({class_count},)")
        self.name = name
        self.layers = layers
        self.input_dim = input_dim
        self.input_shape = tuple(input_shape)
        self.class_count = class_count

    def prepare(self, batch: np.ndarray) -> np.ndarray:
        """Flat rows (or a single vector) to the layout the first layer expects."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 1:
            batch = batch[None, :]
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ShapeError(f"expected rows of length {self.input_dim}, got shape {batch.shape}")
        width = int(np.prod(self.input_shape))
        if width != self.input_dim:
            batch = np.pad(batch, ((0, 0), (0, width - self.input_dim)))
        return batch.reshape((batch.shape[0],) + self.input_shape)

    def logits(
        self, batch: np.ndarray, training: bool = False, rng: Optional[np.random.Generator] = None
    ) -> np.ndarray:
        out = self.prepare(batch)
        for layer in self.layers[:-1]:
            out = layer.forward(out, training, rng)
        return out

    def forward(
        self, batch: np.ndarray, training: bool = False, rng: Optional[np.random.Generator] = None
    ) -> np.ndarray:
        return self.layers[-1].forward(self.logits(batch, training, rng), training, rng)

    def backward(self, dlogits: np.ndarray) -> None:
        """Backpropagate a gradient w.r.t. the logits; fills every layer's ``grads``."""
        grad = dlogits
        for layer in reversed(self.layers[:-1]):
            grad = layer.backward(grad)

    def parameters(self) -> List[Tuple[int, str, np.ndarray]]:
        return [
            (i, name, value)
            for i, layer in enumerate(self.layers)
            for name, value in layer.params.items()
        ]

    @property
    def parameter_count(self) -> int:
        return sum(int(value.size) for _, _, value in self.parameters())

    def squared_norm(self) -> float:
        return float(sum(np.sum(value**2) for _, _, value in self.parameters()))

    def summary(self) -> ModelSummary:
        return ModelSummary(
            name=self.name,
            input_dim=self.input_dim,
            input_shape=self.input_shape,
            class_count=self.class_count,
            layers=[layer.spec for layer in self.layers],
            parameter_count=self.parameter_count,
        )

    def clone(self) -> "NetworkModel":
        return copy.deepcopy(self)


def image_side(input_dim: int) -> int:
    return math.isqrt(input_dim - 1) + 1 if input_dim > 1 else 1


def build_mnist_cnn(input_dim: int = 784, class_count: int = 10, seed: int = 0) -> NetworkModel:
    """
    conv(1->10, 5x5) > pool > relu > conv(10->20, 5x5) > pool > relu > flatten
    > dense(->50) > relu > dense(50->classes) > softmax.

    At 28x28 the flattened width is 20 * 4 * 4 = 320.
    """
    side = image_side(input_dim)
    rng = make_rng(seed)
    shape: Shape = (1, side, side)
    convs: List[Layer] = [
        Conv2D(1, 10, 5, rng),
        MaxPool2D(2),
        ReLU(),
        Conv2D(10, 20, 5, rng),
        MaxPool2D(2),
        ReLU(),
        Flatten(),
    ]
    try:
        for layer in convs:
            shape = layer.output_shape(shape)
    except (ShapeError, ValueError) as exc:
        raise ShapeError(f"{side}x{side} input is too small for the CNN: {exc}") from exc
    flat = shape[0]
    layers = convs + [
        Dense(flat, 50, rng),
        ReLU(),
        Dense(50, class_count, rng),
        Softmax(),
    ]
    return NetworkModel("mnist_cnn", layers, input_dim, (1, side, side), class_count)


def build_mlp(
    name: str,
    input_dim: int,
    hidden: Sequence[int],
    class_count: int,
    dropout: float = 0.0,
    seed: int = 0,
) -> NetworkModel:
    if input_dim < 1 or class_count < 1 or any(width < 1 for width in hidden):
        raise ShapeError(f"layer widths must be positive, got {input_dim}, {list(hidden)}, {class_count}")
    rng = make_rng(seed)
    layers: List[Layer] = []
    width = input_dim
    for out in hidden:
        layers += [Dense(width, out, rng), ReLU()]
        if dropout > 0:
            layers.append(Dropout(dropout))
        width = out
    layers += [Dense(width, class_count, rng), Softmax()]
    return NetworkModel(name, layers, input_dim, (input_dim,), class_count)


def build_spam_mlp(
    input_dim: int = 57, dropout: float = settings.SPAM_DROPOUT, seed: int = 0
) -> NetworkModel:
    """Dense 57 > 100 > 50 > 10 > 2 with dropout after each hidden ReLU."""
    return build_mlp("spam_mlp", input_dim, [100, 50, 10], 2, dropout=dropout, seed=seed)


def build_toy_mlp(
    input_dim: int = 2, hidden: Sequence[int] = (30, 40), classes: int = 2, seed: int = 0
) -> NetworkModel:
    return build_mlp("toy_mlp", input_dim, hidden, classes, seed=seed)


MODEL_IDS = ("cnn", "spam_mlp", "toy_mlp")


def build_model(model_id: str, input_dim: int, class_count: int, seed: int = 0) -> NetworkModel:
    """Builder by id; the model input width follows the (possibly projected) data."""
    if model_id == "cnn":
        return build_mnist_cnn(input_dim=input_dim, class_count=class_count, seed=seed)
    if model_id == "spam_mlp":
        return build_mlp(
            "spam_mlp", input_dim, [100, 50, 10], class_count, dropout=settings.SPAM_DROPOUT, seed=seed
        )
    if model_id == "toy_mlp":
        return build_toy_mlp(input_dim=input_dim, classes=class_count, seed=seed)
    raise ValueError(f"unknown model id {model_id!r}")
