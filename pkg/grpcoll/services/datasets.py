"""Dataset ingestion (IDX, CSV), synthetic generators, augmentation, normalization and sharding."""

import gzip
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from grpcoll.core.config import settings
from grpcoll.core.errors import (
    BadMagicError,
    CountMismatchError,
    DatasetNotFoundError,
    EmptyDatasetError,
    EmptyInputError,
    InvalidDimensionError,
    NonNumericCellError,
    RaggedRowError,
    TargetTooSmallError,
    TooManyShardsError,
    TruncatedFileError,
)
from grpcoll.core.logging import get_logger
from grpcoll.core.seeding import make_rng
from grpcoll.schemas.dataset import Dataset, ShardPlan

logger = get_logger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

PathLike = Union[str, Path]


def data_path(name: str) -> Path:
    """Resolve a dataset file name against GRPC0LL_DATA_DIR."""
    path = Path(name)
    return path if path.is_absolute() else settings.GRPC0LL_DATA_DIR / path


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError as e:
        raise DatasetNotFoundError(f"{path} not found; set GRPC0LL_DATA_DIR") from e
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, what: str) -> Tuple[Tuple[int, ...], np.ndarray]:
    if len(raw) < 4:
        raise TruncatedFileError(f"{what} file shorter than its magic number")
    (found,) = struct.unpack_from(">I", raw)
    if found != magic:
        raise BadMagicError(f"{what} file has magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise TruncatedFileError(f"{what} file header truncated")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    if len(raw) < header_len + count:
        raise TruncatedFileError(f"{what} file has {len(raw) - header_len} data bytes, expected {count}")
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_len)
    return dims, data


def load_idx(images_path: PathLike, labels_path: PathLike, provenance: str = "") -> Dataset:
    """Read an IDX image/label pair; images are flattened and kept on the raw [0, 255] scale."""
    image_dims, pixels = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, "images")
    label_dims, labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, "labels")
    if image_dims[0] != label_dims[0]:
        raise CountMismatchError(f"{image_dims[0]} images but {label_dims[0]} labels")
    n = image_dims[0]
    d = int(np.prod(image_dims[1:]))
    labels = labels.astype(np.int64)
    class_count = max(10, int(labels.max()) + 1) if n else 10
    ds = Dataset(
        vectors=pixels.reshape(n, d).astype(np.float64),
        labels=labels,
        class_count=class_count,
        lower=np.zeros(d),
        upper=np.full(d, 255.0),
        provenance=provenance or f"idx:{Path(images_path).name}",
    )
    logger.info("idx_loaded", path=str(images_path), samples=n, dimension=d)
    return ds


def write_idx(ds: Dataset, images_path: PathLike, labels_path: PathLike, rows: int, cols: int) -> None:
    """Write a dataset of byte-valued vectors as an IDX image/label pair."""
    if ds.dimension != rows * cols:
        raise InvalidDimensionError(f"dimension {ds.dimension} != {rows}x{cols}")
    pixels = np.clip(np.rint(ds.vectors), 0, 255).astype(np.uint8)
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, ds.size, rows, cols)
    Path(images_path).write_bytes(header + pixels.tobytes())
    header = struct.pack(">II", IDX_LABELS_MAGIC, ds.size)
    Path(labels_path).write_bytes(header + ds.labels.astype(np.uint8).tobytes())


def load_mnist(split: str = "train") -> Dataset:
    """MNIST from GRPC0LL_DATA_DIR using the official file names (optionally gzipped)."""
    prefix = "train" if split == "train" else "t10k"
    names = (f"{prefix}-images-idx3-ubyte", f"{prefix}-labels-idx1-ubyte")
    paths = []
    for name in names:
        path = data_path(name)
        if not path.exists() and data_path(name + ".gz").exists():
            path = data_path(name + ".gz")
        paths.append(path)
    return load_idx(paths[0], paths[1], provenance=f"mnist:{split}")


def load_csv(path: PathLike, label_column: int = -1, header: bool = False) -> Dataset:
    """Rectangular numeric CSV; the label column holds class indices."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError as e:
        raise DatasetNotFoundError(f"{path} not found; set GRPC0LL_DATA_DIR") from e
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise EmptyInputError(f"{path} is empty")
    widths = np.array([line.count(",") for line in lines])
    if np.any(widths != widths[0]):
        row = int(np.flatnonzero(widths != widths[0])[0])
        raise RaggedRowError(f"{path}: line {row + 1} has {widths[row] + 1} fields, expected {widths[0] + 1}")
    try:
        frame = pd.read_csv(
            path,
            header=0 if header else None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyInputError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        raise RaggedRowError(f"{path}: {e}") from e
    if frame.empty:
        raise EmptyInputError(f"{path} has no data rows")

    # missing trailing fields come back as NaN; empty cells as ""
    short_rows = frame.isna().any(axis=1)
    if short_rows.any():
        row = int(np.flatnonzero(short_rows.to_numpy())[0])
        raise RaggedRowError(f"{path}: row {row} has fewer than {frame.shape[1]} fields")
    try:
        values = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="raise")).to_numpy(
            dtype=np.float64
        )
    except (ValueError, TypeError) as e:
        raise NonNumericCellError(f"{path}: {e}") from e

    label_index = label_column % values.shape[1]
    raw_labels = values[:, label_index]
    if np.any(raw_labels != np.round(raw_labels)) or np.any(raw_labels < 0):
        raise NonNumericCellError(f"{path}: label column holds non-class values")
    vectors = np.delete(values, label_index, axis=1)
    labels = raw_labels.astype(np.int64)
    ds = Dataset(
        vectors=vectors,
        labels=labels,
        class_count=int(labels.max()) + 1,
        lower=vectors.min(axis=0),
        upper=vectors.max(axis=0),
        provenance=f"csv:{Path(path).name}",
    )
    logger.info("csv_loaded", path=str(path), samples=ds.size, dimension=ds.dimension)
    return ds


def load_spambase() -> Dataset:
    return load_csv(data_path("spambase.data"), label_column=-1)


def synth_gaussian_two_class(d: int, mean_magnitude: float, n_per_class: int, seed: int) -> Dataset:
    """Class 0 ~ N(-m*1, I), class 1 ~ N(+m*1, I), rows shuffled."""
    if d < 1 or n_per_class < 1:
        raise InvalidDimensionError("need d >= 1 and n_per_class >= 1")
    rng = make_rng(seed)
    class0 = rng.standard_normal((n_per_class, d)) - mean_magnitude
    class1 = rng.standard_normal((n_per_class, d)) + mean_magnitude
    vectors = np.vstack([class0, class1])
    labels = np.repeat([0, 1], n_per_class)
    order = rng.permutation(vectors.shape[0])
    vectors, labels = vectors[order], labels[order]
    return Dataset(
        vectors=vectors,
        labels=labels,
        class_count=2,
        lower=vectors.min(axis=0),
        upper=vectors.max(axis=0),
        provenance=f"gauss2(d={d},m={mean_magnitude},seed={seed})",
    )


def subset(ds: Dataset, indices: np.ndarray, provenance: Optional[str] = None) -> Dataset:
    """Rows ``indices`` of ``ds``; domain bounds are inherited."""
    indices = np.asarray(indices, dtype=np.int64)
    return Dataset(
        vectors=ds.vectors[indices],
        labels=ds.labels[indices],
        class_count=ds.class_count,
        lower=ds.lower,
        upper=ds.upper,
        provenance=provenance or ds.provenance,
    )


def concat(parts: Sequence[Dataset], provenance: str = "") -> Dataset:
    if not parts:
        raise EmptyDatasetError("nothing to concatenate")
    return Dataset(
        vectors=np.vstack([p.vectors for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        class_count=max(p.class_count for p in parts),
        lower=np.min([p.lower for p in parts], axis=0),
        upper=np.max([p.upper for p in parts], axis=0),
        provenance=provenance or parts[0].provenance,
    )


def split(ds: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded disjoint train/test split."""
    order = make_rng(seed).permutation(ds.size)
    n_test = int(round(ds.size * test_fraction))
    return (
        subset(ds, np.sort(order[n_test:]), f"{ds.provenance}|train"),
        subset(ds, np.sort(order[:n_test]), f"{ds.provenance}|test"),
    )


def _class_targets(labels: np.ndarray, class_count: int, target: int) -> np.ndarray:
    # largest-remainder allocation of ``target`` in proportion to class frequencies
    counts = np.bincount(labels, minlength=class_count).astype(np.float64)
    exact = counts / counts.sum() * target
    alloc = np.floor(exact).astype(np.int64)
    short = target - int(alloc.sum())
    alloc[np.argsort(-(exact - alloc), kind="stable")[:short]] += 1
    return alloc


def _resample(
    ds: Dataset, target: int, noise_std: np.ndarray, rng: np.random.Generator, tag: str
) -> Dataset:
    if target == 0:
        return Dataset(
            vectors=np.zeros((0, ds.dimension)),
            labels=np.zeros(0, dtype=np.int64),
            class_count=ds.class_count,
            lower=ds.lower,
            upper=ds.upper,
            provenance=f"{ds.provenance}|{tag}",
        )
    if ds.size == 0:
        raise EmptyDatasetError(f"cannot grow an empty split to {target} samples")
    alloc = _class_targets(ds.labels, ds.class_count, target)
    chosen: List[np.ndarray] = []
    for label, count in enumerate(alloc):
        members = np.flatnonzero(ds.labels == label)
        if count and members.size:
            chosen.append(members[np.arange(count) % members.size])
    index = rng.permutation(np.concatenate(chosen))
    vectors = ds.vectors[index]
    if target > ds.size:
        vectors = vectors + rng.standard_normal(vectors.shape) * noise_std
    return Dataset(
        vectors=vectors,
        labels=ds.labels[index],
        class_count=ds.class_count,
        lower=np.minimum(ds.lower, vectors.min(axis=0)),
        upper=np.maximum(ds.upper, vectors.max(axis=0)),
        provenance=f"{ds.provenance}|{tag}",
    )


def augment_gaussian(
    ds: Dataset,
    noise_std: Union[float, np.ndarray],
    target_train: int,
    target_test: int,
    seed: int,
    test_fraction: float = 0.1,
) -> Tuple[Dataset, Dataset]:
    """
    Split first, then grow each side with noisy replicas.

    Replicas cycle through each class's base samples, so class proportions of
    the base split are kept within one sample. Every output sample is a noisy
    replica when the target exceeds the base size; a test target below its
    base size is met by a stratified subsample without noise.
    """
    if ds.size == 0:
        raise EmptyDatasetError("cannot augment an empty dataset")
    if target_train < 0 or target_test < 0:
        raise TargetTooSmallError(f"targets must be non-negative, got {target_train} and {target_test}")
    train, test = split(ds, test_fraction, seed)
    if target_train < train.size:
        raise TargetTooSmallError(f"train target {target_train} below base split size {train.size}")
    noise_std = np.broadcast_to(np.asarray(noise_std, dtype=np.float64), (ds.dimension,))
    rng = make_rng(seed + 1)
    aug_train = _resample(train, target_train, noise_std, rng, "aug")
    aug_test = _resample(test, target_test, noise_std, rng, "aug")
    logger.info(
        "dataset_augmented",
        base_train=train.size,
        base_test=test.size,
        train=aug_train.size,
        test=aug_test.size,
        noise_std_mean=float(noise_std.mean()),
    )
    return aug_train, aug_test


def spambase_noise_std(train: Dataset, fraction: float = settings.SPAM_NOISE_FRACTION) -> np.ndarray:
    """Per-feature augmentation noise: a fraction of each feature's training std."""
    return fraction * train.vectors.std(axis=0)


def shard(ds: Dataset, participants: int, seed: int) -> ShardPlan:
    """Seeded shuffle, then round-robin assignment."""
    if participants < 1:
        raise TooManyShardsError(f"need at least one participant, got {participants}")
    if participants > ds.size:
        raise TooManyShardsError(f"{participants} shards for {ds.size} samples")
    order = make_rng(seed).permutation(ds.size)
    assignment = np.empty(ds.size, dtype=np.int64)
    assignment[order] = np.arange(ds.size) % participants
    return ShardPlan(participant_count=participants, assignment=assignment, seed=seed)


def shards(ds: Dataset, plan: ShardPlan) -> List[Dataset]:
    return [
        subset(ds, plan.indices(p), f"{ds.provenance}|shard{p}/{plan.participant_count}")
        for p in range(plan.participant_count)
    ]


def constant_dimensions(ds: Dataset) -> List[int]:
    return np.flatnonzero(ds.upper - ds.lower <= 0).tolist()


def normalize(ds: Dataset, mode: str = "unit_range", reference: Optional[Dataset] = None) -> Dataset:
    """
    Map each dimension affinely onto [0, 1] using the domain bounds; constant dimensions stay.

    With ``reference`` the map uses that dataset's bounds instead (a test split
    scaled like its training split); values falling outside are clipped.
    """
    if mode == "none":
        return ds
    if mode != "unit_range":
        raise ValueError(f"unknown normalization mode {mode!r}")
    source = reference if reference is not None else ds
    if source.dimension != ds.dimension:
        raise InvalidDimensionError(f"reference dimension {source.dimension} != {ds.dimension}")
    width = source.upper - source.lower
    live = width > 0
    constant = constant_dimensions(source)
    if constant:
        logger.warning("constant_dimensions_unchanged", count=len(constant), dimensions=constant[:20])
    vectors = ds.vectors.copy()
    vectors[:, live] = (vectors[:, live] - source.lower[live]) / width[live]
    # rounding (or a foreign reference) can leave values outside [0, 1]
    vectors[:, live] = np.clip(vectors[:, live], 0.0, 1.0)
    lower = np.where(live, 0.0, np.minimum(source.lower, ds.lower))
    upper = np.where(live, 1.0, np.maximum(source.upper, ds.upper))
    return Dataset(
        vectors=vectors,
        labels=ds.labels,
        class_count=ds.class_count,
        lower=lower,
        upper=upper,
        provenance=f"{ds.provenance}|unit_range",
    )


def class_histogram(ds: Dataset) -> Dict[int, int]:
    counts = np.bincount(ds.labels, minlength=ds.class_count)
    return {label: int(c) for label, c in enumerate(counts)}
