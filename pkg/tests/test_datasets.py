import struct

import numpy as np
import pytest
from conftest import requires_mnist, requires_spambase

from grpcoll.core.errors import (
    BadMagicError,
    CountMismatchError,
    DatasetNotFoundError,
    EmptyDatasetError,
    EmptyInputError,
    NonNumericCellError,
    RaggedRowError,
    TargetTooSmallError,
    TooManyShardsError,
    TruncatedFileError,
)
from grpcoll.schemas.dataset import Dataset
from grpcoll.services.datasets import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    augment_gaussian,
    class_histogram,
    load_csv,
    load_idx,
    load_mnist,
    load_spambase,
    normalize,
    shard,
    shards,
    split,
    synth_gaussian_two_class,
    write_idx,
)


def _byte_images(n=12, rows=4, cols=5, seed=0):
    rng = np.random.default_rng(seed)
    d = rows * cols
    return Dataset(
        vectors=rng.integers(0, 256, size=(n, d)).astype(np.float64),
        labels=rng.integers(0, 10, size=n),
        class_count=10,
        lower=np.zeros(d),
        upper=np.full(d, 255.0),
    )


def test_idx_round_trip_is_bitwise(tmp_path):
    ds = _byte_images()
    images, labels = tmp_path / "img.idx", tmp_path / "lbl.idx"
    write_idx(ds, images, labels, 4, 5)
    loaded = load_idx(images, labels)
    assert loaded.vectors.tobytes() == ds.vectors.tobytes()
    assert np.array_equal(loaded.labels, ds.labels)
    assert loaded.dimension == 20
    assert np.all(loaded.upper == 255.0)


def test_idx_bad_magic(tmp_path):
    ds = _byte_images()
    images, labels = tmp_path / "img.idx", tmp_path / "lbl.idx"
    write_idx(ds, images, labels, 4, 5)
    raw = bytearray(images.read_bytes())
    raw[:4] = struct.pack(">I", IDX_LABELS_MAGIC)
    images.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        load_idx(images, labels)


def test_idx_truncated(tmp_path):
    ds = _byte_images()
    images, labels = tmp_path / "img.idx", tmp_path / "lbl.idx"
    write_idx(ds, images, labels, 4, 5)
    images.write_bytes(images.read_bytes()[:-7])
    with pytest.raises(TruncatedFileError):
        load_idx(images, labels)


def test_idx_count_mismatch(tmp_path):
    ds = _byte_images(n=12)
    images, labels = tmp_path / "img.idx", tmp_path / "lbl.idx"
    write_idx(ds, images, labels, 4, 5)
    labels.write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, 11) + bytes(11))
    with pytest.raises(CountMismatchError):
        load_idx(images, labels)


def test_idx_header_layout(tmp_path):
    ds = _byte_images(n=3)
    images, labels = tmp_path / "img.idx", tmp_path / "lbl.idx"
    write_idx(ds, images, labels, 4, 5)
    assert struct.unpack(">IIII", images.read_bytes()[:16]) == (IDX_IMAGES_MAGIC, 3, 4, 5)


def test_load_csv(tmp_path):
    path = tmp_path / "small.csv"
    path.write_text("0.5,1,2,0\n1.5,0,3,1\n2.5,2,1,1\n")
    ds = load_csv(path)
    assert (ds.size, ds.dimension, ds.class_count) == (3, 3, 2)
    assert ds.labels.tolist() == [0, 1, 1]
    assert ds.vectors[1].tolist() == [1.5, 0.0, 3.0]


def test_load_csv_with_header_and_first_label(tmp_path):
    path = tmp_path / "small.csv"
    path.write_text("label,a,b\n2,0.1,0.2\n0,0.3,0.4\n")
    ds = load_csv(path, label_column=0, header=True)
    assert ds.labels.tolist() == [2, 0]
    assert ds.class_count == 3


def test_load_csv_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(EmptyInputError):
        load_csv(empty)

    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2,3,0\n1,2,0\n")
    with pytest.raises(RaggedRowError):
        load_csv(ragged)

    text = tmp_path / "text.csv"
    text.write_text("1,2,3,0\n1,spam,3,1\n")
    with pytest.raises(NonNumericCellError):
        load_csv(text)


def test_gaussian_means():
    ds = synth_gaussian_two_class(2, 2.0, 1000, seed=3)
    assert ds.size == 2000
    assert np.allclose(ds.vectors[ds.labels == 0].mean(axis=0), [-2, -2], atol=0.15)
    assert np.allclose(ds.vectors[ds.labels == 1].mean(axis=0), [2, 2], atol=0.15)
    assert class_histogram(ds) == {0: 1000, 1: 1000}


def test_ten_dimensional_gaussian():
    ds = synth_gaussian_two_class(10, 2.0, 500, seed=4)
    assert ds.dimension == 10
    assert np.allclose(ds.vectors[ds.labels == 1].mean(axis=0), 2.0, atol=0.25)


@pytest.mark.parametrize("n", [1, 2, 3, 7, 14, 50])
def test_shard_partition(n):
    ds = synth_gaussian_two_class(3, 1.0, 25, seed=5)
    plan = shard(ds, n, seed=9)
    parts = [plan.indices(p) for p in range(n)]
    everything = np.concatenate(parts)
    assert sorted(everything.tolist()) == list(range(ds.size))
    sizes = plan.sizes()
    assert max(sizes) - min(sizes) <= 1
    assert [s.size for s in shards(ds, plan)] == list(sizes)


def test_shard_sizes_for_mnist_scale():
    labels = np.zeros(60_000, dtype=np.int64)
    ds = Dataset(vectors=np.zeros((60_000, 1)), labels=labels, class_count=1, lower=[0.0], upper=[0.0])
    sizes = shard(ds, 14, seed=0).sizes()
    assert sum(sizes) == 60_000
    assert sorted(sizes) == [4285] * 4 + [4286] * 10


def test_single_shard_is_everything():
    ds = synth_gaussian_two_class(2, 1.0, 10, seed=1)
    (only,) = shards(ds, shard(ds, 1, seed=0))
    assert only.size == ds.size


def test_too_many_shards():
    ds = synth_gaussian_two_class(2, 1.0, 2, seed=1)
    with pytest.raises(TooManyShardsError):
        shard(ds, 5, seed=0)
    with pytest.raises(TooManyShardsError):
        shard(ds, 0, seed=0)


def test_augment_targets_and_labels():
    base = synth_gaussian_two_class(4, 1.0, 100, seed=2)
    train, test = augment_gaussian(base, 0.1, target_train=1000, target_test=15, seed=3)
    assert (train.size, test.size) == (1000, 15)
    base_train, _ = split(base, 0.1, seed=3)
    base_counts = np.bincount(base_train.labels, minlength=2) / base_train.size * 1000
    assert np.all(np.abs(np.bincount(train.labels, minlength=2) - base_counts) <= 1)


def test_augment_zero_noise_gives_replicas():
    base = synth_gaussian_two_class(3, 1.0, 20, seed=2)
    train, _ = augment_gaussian(base, 0.0, target_train=100, target_test=2, seed=3)
    rows = {tuple(v) for v in base.vectors}
    assert all(tuple(v) in rows for v in train.vectors)


def test_augment_noise_std():
    vectors = np.zeros((20, 5))
    base = Dataset(
        vectors=vectors, labels=np.zeros(20, dtype=np.int64), class_count=1, lower=np.zeros(5), upper=np.zeros(5)
    )
    train, _ = augment_gaussian(base, 0.3, target_train=20_000, target_test=2, seed=1)
    assert np.allclose(train.vectors.std(axis=0), 0.3, rtol=0.03)


def test_augment_errors():
    base = synth_gaussian_two_class(2, 1.0, 50, seed=0)
    with pytest.raises(TargetTooSmallError):
        augment_gaussian(base, 0.1, target_train=10, target_test=5, seed=0)
    empty = Dataset(vectors=np.zeros((0, 2)), labels=[], class_count=2, lower=np.zeros(2), upper=np.ones(2))
    with pytest.raises(EmptyDatasetError):
        augment_gaussian(empty, 0.1, target_train=10, target_test=5, seed=0)
    with pytest.raises(TargetTooSmallError):
        augment_gaussian(base, 0.1, target_train=100, target_test=-1, seed=0)


def test_augment_zero_test_target_gives_empty_test_set():
    base = synth_gaussian_two_class(4, 1.0, 20, seed=0)
    train, test = augment_gaussian(base, 0.1, target_train=100, target_test=0, seed=0)
    assert train.size == 100
    assert (test.size, test.dimension, test.class_count) == (0, 4, 2)


def test_augment_tiny_base_with_empty_test_split():
    # 4 samples at a 10% test fraction leave no base test samples to replicate
    base = synth_gaussian_two_class(4, 1.0, 2, seed=0)
    with pytest.raises(EmptyDatasetError):
        augment_gaussian(base, 0.1, target_train=10, target_test=5, seed=0)
    train, test = augment_gaussian(base, 0.1, target_train=10, target_test=0, seed=0)
    assert (train.size, test.size) == (10, 0)


def test_normalize_unit_range_and_none():
    ds = _byte_images()
    scaled = normalize(ds)
    assert scaled.vectors.min() >= 0.0 and scaled.vectors.max() <= 1.0
    assert np.allclose(scaled.vectors, ds.vectors / 255.0)
    assert normalize(ds, "none") is ds


def test_normalize_constant_column_unchanged():
    vectors = np.array([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]])
    ds = Dataset(vectors=vectors, labels=[0, 1, 0], class_count=2, lower=vectors.min(0), upper=vectors.max(0))
    out = normalize(ds)
    assert np.array_equal(out.vectors[:, 1], [5.0, 5.0, 5.0])
    assert np.allclose(out.vectors[:, 0], [0.0, 1.0, 0.5])


def test_normalize_with_reference_bounds():
    train = Dataset(vectors=[[0.0], [10.0]], labels=[0, 1], class_count=2, lower=[0.0], upper=[10.0])
    test = Dataset(vectors=[[5.0], [20.0]], labels=[0, 1], class_count=2, lower=[5.0], upper=[20.0])
    out = normalize(test, reference=train)
    assert out.vectors[:, 0].tolist() == [0.5, 1.0]


@pytest.mark.slow
@requires_mnist
def test_official_mnist_files():
    ds = load_mnist("train")
    assert (ds.size, ds.dimension, ds.class_count) == (60_000, 784, 10)
    assert load_mnist("test").size == 10_000


@pytest.mark.slow
@requires_spambase
def test_spambase_file():
    ds = load_spambase()
    assert (ds.size, ds.dimension, ds.class_count) == (4601, 57, 2)


def test_missing_files(tmp_path):
    with pytest.raises(DatasetNotFoundError):
        load_csv(tmp_path / "absent.csv")
    with pytest.raises(DatasetNotFoundError):
        load_idx(tmp_path / "a.idx", tmp_path / "b.idx")
