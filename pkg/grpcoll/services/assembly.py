"""
Key-free assembly of the coordinator's training set.

Samples arrive as float32 on the wire; the coordinator concatenates them
without any participant identity and puts them into a content order
(label, then vector values lexicographically), so the result depends only
on the multiset of samples and not on arrival timing. The in-process
simulation runs the same two steps.
"""

from typing import Sequence, Tuple

import numpy as np

from grpcoll.core.errors import EmptyDatasetError, ShapeError
from grpcoll.schemas.dataset import Dataset

WIRE_DTYPE = np.dtype("<f4")

Part = Tuple[np.ndarray, np.ndarray]


def wire_round(vectors: np.ndarray) -> np.ndarray:
    """Values as they come off the wire: rounded to single precision, held as float64."""
    return np.asarray(vectors, dtype=np.float64).astype(WIRE_DTYPE).astype(np.float64)


def canonical_order(vectors: np.ndarray, labels: np.ndarray) -> np.ndarray:
    if vectors.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    # lexsort treats the last key as primary
    keys = tuple(vectors[:, j] for j in range(vectors.shape[1] - 1, -1, -1)) + (labels,)
    return np.lexsort(keys)


def assemble(parts: Sequence[Part], class_count: int, provenance: str = "assembled") -> Dataset:
    parts = [(np.asarray(v, dtype=np.float64), np.asarray(y, dtype=np.int64)) for v, y in parts]
    parts = [(v, y) for v, y in parts if v.shape[0]]
    if not parts:
        raise EmptyDatasetError("no samples to assemble")
    dims = {v.shape[1] for v, _ in parts}
    if len(dims) != 1:
        raise ShapeError(f"parts disagree on dimension: {sorted(dims)}")
    vectors = np.concatenate([v for v, _ in parts])
    labels = np.concatenate([y for _, y in parts])
    order = canonical_order(vectors, labels)
    vectors, labels = vectors[order], labels[order]
    return Dataset(
        vectors=vectors,
        labels=labels,
        class_count=class_count,
        lower=vectors.min(axis=0),
        upper=vectors.max(axis=0),
        provenance=provenance,
    )
