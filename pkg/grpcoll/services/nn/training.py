"""
Mini-batch SGD on mean cross-entropy plus lambda * ||theta||^2.

Training is single-task and deterministic: the shuffling and dropout streams
both derive from ``TrainConfig.seed``, so a fixed seed reproduces the final
parameters bitwise.
"""

import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from grpcoll.core.errors import EmptyDatasetError, LabelRangeError, ShapeError
from grpcoll.core.logging import get_logger
from grpcoll.core.seeding import make_rng, spawn_seeds
from grpcoll.schemas.dataset import Dataset
from grpcoll.schemas.nn import EpochStats, TrainConfig, TrainHistory
from grpcoll.services.nn.layers import log_softmax
from grpcoll.services.nn.network import NetworkModel

logger = get_logger(__name__)

Gradients = List[Dict[str, np.ndarray]]

EVAL_BATCH = 1024


def forward(
    model: NetworkModel,
    batch: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    return model.forward(batch, training=training, rng=rng)


def _check_labels(model: NetworkModel, labels: np.ndarray, rows: int) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if labels.shape[0] != rows:
        raise ShapeError(f"{rows} samples but {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= model.class_count):
        raise LabelRangeError(f"labels must lie in [0, {model.class_count})")
    return labels


def _loss_and_gradients(
    model: NetworkModel,
    batch: np.ndarray,
    labels: np.ndarray,
    weight_decay: float,
    training: bool,
    rng: Optional[np.random.Generator],
) -> Tuple[float, Gradients, np.ndarray]:
    rows = np.asarray(batch).shape[0] if np.ndim(batch) > 1 else 1
    labels = _check_labels(model, labels, rows)
    logits = model.logits(batch, training=training, rng=rng)
    n = logits.shape[0]
    log_p = log_softmax(logits)
    loss = -float(log_p[np.arange(n), labels].mean())

    dlogits = np.exp(log_p)
    dlogits[np.arange(n), labels] -= 1.0
    model.backward(dlogits / n)

    grads: Gradients = []
    for layer in model.layers:
        layer_grads = {}
        for name, value in layer.params.items():
            g = layer.grads[name]
            if weight_decay:
                g = g + 2.0 * weight_decay * value
            layer_grads[name] = g
        grads.append(layer_grads)
    if weight_decay:
        loss += weight_decay * model.squared_norm()
    return loss, grads, logits


def loss_and_gradients(
    model: NetworkModel,
    batch: np.ndarray,
    labels: np.ndarray,
    weight_decay: float = 0.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, Gradients]:
    """
    Loss and per-layer gradients (same keys as each layer's ``params``).

    The softmax head is differentiated together with the cross-entropy:
    d loss / d logits = (p - onehot) / n.
    """
    loss, grads, _ = _loss_and_gradients(model, batch, labels, weight_decay, training, rng)
    return loss, grads


def sgd_step(model: NetworkModel, grads: Gradients, learning_rate: float) -> None:
    for layer, layer_grads in zip(model.layers, grads):
        for name, g in layer_grads.items():
            layer.params[name] -= learning_rate * g


def _check_dataset(model: NetworkModel, ds: Dataset) -> None:
    if ds.size == 0:
        raise EmptyDatasetError("cannot train or evaluate on an empty dataset")
    if ds.dimension != model.input_dim:
        raise ShapeError(f"dataset dimension {ds.dimension} != model input {model.input_dim}")
    if ds.class_count > model.class_count:
        raise LabelRangeError(f"{ds.class_count} classes but the model has {model.class_count}")


def train(
    model: NetworkModel, train_set: Dataset, config: TrainConfig
) -> Tuple[NetworkModel, TrainHistory]:
    """Train ``model`` in place; returns it with the per-epoch history."""
    _check_dataset(model, train_set)
    history = TrainHistory()
    shuffle_seed, dropout_seed = spawn_seeds(config.seed, 2)
    order_rng = make_rng(shuffle_seed)
    dropout_rng = make_rng(dropout_seed)
    vectors, labels = train_set.vectors, train_set.labels
    n = train_set.size
    started = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        order = order_rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads, logits = _loss_and_gradients(
                model,
                vectors[idx],
                labels[idx],
                weight_decay=config.weight_decay,
                training=True,
                rng=dropout_rng,
            )
            correct += int(np.sum(logits.argmax(axis=1) == labels[idx]))
            sgd_step(model, grads, config.learning_rate)
            loss_sum += loss * idx.size
        stats = EpochStats(epoch=epoch, loss=loss_sum / n, accuracy=correct / n)
        history.epochs.append(stats)
        logger.debug("epoch_done", model=model.name, epoch=epoch, loss=stats.loss, accuracy=stats.accuracy)

    history.train_seconds = time.perf_counter() - started
    logger.info(
        "training_complete",
        model=model.name,
        samples=n,
        epochs=config.epochs,
        train_seconds=round(history.train_seconds, 3),
        final_accuracy=history.final_accuracy,
    )
    return model, history


def predict_proba(model: NetworkModel, vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim == 1:
        vectors = vectors[None, :]
    if vectors.shape[0] == 0:
        return np.zeros((0, model.class_count))
    return np.concatenate(
        [model.forward(vectors[i : i + EVAL_BATCH]) for i in range(0, vectors.shape[0], EVAL_BATCH)]
    )


def predict(model: NetworkModel, vectors: np.ndarray) -> np.ndarray:
    """Argmax classes; ties go to the lowest class index."""
    return predict_proba(model, vectors).argmax(axis=1)


def classify_one(model: NetworkModel, x: np.ndarray) -> Tuple[int, np.ndarray]:
    """
    Class and probabilities for one vector, scored as a batch of one.

    The coordinator answers CLASSIFY_REQ with this and the simulation scores
    its test shards with ``predict_rows``, so both see the same rounding.
    Blocked ``predict_proba`` may differ from it in the last bits.
    """
    probabilities = model.forward(np.asarray(x, dtype=np.float64)[None, :])[0]
    return int(np.argmax(probabilities)), probabilities


def predict_rows(model: NetworkModel, vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    return np.array([classify_one(model, x)[0] for x in vectors], dtype=np.int64)


def evaluate(model: NetworkModel, test_set: Dataset) -> float:
    _check_dataset(model, test_set)
    return float(np.mean(predict(model, test_set.vectors) == test_set.labels))
