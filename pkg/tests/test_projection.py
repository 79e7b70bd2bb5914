import numpy as np
import pytest

from grpcoll.core.errors import (
    BadMagicError,
    DegenerateMatrixError,
    InvalidDimensionError,
    TruncatedFileError,
    UnachievableConditionError,
    UnsupportedVersionError,
)
from grpcoll.schemas.dataset import Dataset
from grpcoll.services.projection import (
    KEY_HEADER,
    compression_ratio,
    condition_number,
    decode_key,
    encode_key,
    generate_conditioned_matrix,
    generate_projection,
    key_from_matrix,
    load_key,
    project,
    project_batch,
    project_dataset,
    save_key,
)


def _dataset(vectors, labels, classes=3):
    vectors = np.asarray(vectors, dtype=np.float64)
    d = vectors.shape[1]
    return Dataset(
        vectors=vectors,
        labels=labels,
        class_count=classes,
        lower=vectors.min(axis=0) if len(vectors) else np.zeros(d),
        upper=vectors.max(axis=0) if len(vectors) else np.ones(d),
    )


def test_same_seed_gives_identical_matrix():
    a = generate_projection(1, 1, seed=99)
    b = generate_projection(1, 1, seed=99)
    assert a.matrix.shape == (1, 1)
    assert a.matrix.tobytes() == b.matrix.tobytes()
    c = generate_projection(20, 30, seed=5)
    assert np.array_equal(c.matrix, generate_projection(20, 30, seed=5).matrix)
    assert not np.array_equal(c.matrix, generate_projection(20, 30, seed=6).matrix)


@pytest.mark.parametrize("k,d", [(0, 4), (5, 4), (1, 0)])
def test_invalid_dimensions_rejected(k, d):
    with pytest.raises(InvalidDimensionError):
        generate_projection(k, d, seed=0)


def test_entries_are_standard_normal():
    key = generate_projection(100, 784, seed=2024)
    assert key.scaled
    assert abs(key.matrix.mean()) < 0.02
    assert 0.95 <= key.matrix.var() <= 1.05


def test_compression_ratio():
    assert compression_ratio(generate_projection(784, 784, 0)) == 1.0
    assert compression_ratio(generate_projection(336, 784, 0)) == pytest.approx(2.3333, abs=1e-4)
    assert compression_ratio(generate_projection(392, 784, 0)) == 2.0


def test_project_zero_and_identity():
    key = generate_projection(3, 6, seed=1)
    assert np.array_equal(project(key, np.zeros(6)), np.zeros(3))
    identity = key_from_matrix(np.eye(5), scaled=False)
    x = np.arange(5.0)
    assert np.array_equal(project(identity, x), x)


def test_projection_scaling():
    key = generate_projection(4, 6, seed=3)
    x = np.linspace(-1, 1, 6)
    assert np.allclose(project(key, x), key.matrix @ x / 2.0)


def test_linearity(rng):
    for seed in range(20):
        key = generate_projection(7, 12, seed)
        x, z = rng.standard_normal(12), rng.standard_normal(12)
        a, b = rng.standard_normal(2)
        lhs = project(key, a * x + b * z)
        rhs = a * project(key, x) + b * project(key, z)
        assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_project_dimension_mismatch():
    key = generate_projection(2, 4, seed=0)
    with pytest.raises(InvalidDimensionError):
        project(key, np.ones(3))
    with pytest.raises(InvalidDimensionError):
        project_batch(key, np.ones((2, 5)))


def test_batch_matches_single_vector(rng):
    key = generate_projection(5, 9, seed=4)
    vectors = rng.standard_normal((6, 9))
    batch = project_batch(key, vectors)
    for row, x in zip(batch, vectors):
        assert np.allclose(row, project(key, x), rtol=1e-12)


def test_project_dataset_keeps_labels(rng):
    ds = _dataset(rng.standard_normal((3, 8)), [2, 0, 1])
    key = generate_projection(4, 8, seed=8)
    out = project_dataset(key, ds)
    assert out.vectors.shape == (3, 4)
    assert out.labels.tolist() == [2, 0, 1]
    assert np.all(out.vectors >= out.lower) and np.all(out.vectors <= out.upper)


def test_project_empty_dataset():
    ds = _dataset(np.zeros((0, 8)), [])
    out = project_dataset(generate_projection(4, 8, seed=8), ds)
    assert out.size == 0
    assert out.dimension == 4


def test_project_dataset_dimension_mismatch(rng):
    ds = _dataset(rng.standard_normal((3, 8)), [0, 1, 2])
    with pytest.raises(InvalidDimensionError):
        project_dataset(generate_projection(4, 9, seed=8), ds)


@pytest.mark.parametrize("target", [10.0, 30.0, 100.0, 300.0])
def test_conditioned_matrix_hits_target(target):
    matrix = generate_conditioned_matrix(10, target, seed=17)
    assert matrix.shape == (10, 10)
    assert condition_number(matrix).condition_number == pytest.approx(target, rel=0.01)


def test_condition_below_minimum_is_unachievable():
    with pytest.raises(UnachievableConditionError):
        generate_conditioned_matrix(10, 5.0, seed=0)


def test_condition_number_examples():
    identity = condition_number(np.eye(4))
    assert identity.condition_number == pytest.approx(4.0)
    assert identity.frobenius_norm == pytest.approx(2.0)
    assert condition_number(np.diag([1.0, 2.0])).condition_number == pytest.approx(2.5)
    rank_one = condition_number(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert rank_one.condition_number == pytest.approx(1.0)
    assert rank_one.rank == 1
    with pytest.raises(DegenerateMatrixError):
        condition_number(np.zeros((3, 3)))


def test_condition_number_at_least_rank(rng):
    for _ in range(10):
        m = rng.standard_normal((6, 6))
        report = condition_number(m)
        assert report.condition_number >= report.rank - 1e-9
        assert report.condition_number == pytest.approx(
            report.frobenius_norm * report.pseudoinverse_frobenius_norm
        )


def test_key_blob_layout_and_file(tmp_path):
    key = generate_projection(3, 5, seed=21)
    blob = encode_key(key)
    assert len(blob) == 16 + 8 * 15
    magic, version, k, d, reserved = KEY_HEADER.unpack_from(blob)
    assert (magic, version, k, d, reserved) == (b"GRPM", 1, 3, 5, 0)
    assert np.array_equal(decode_key(blob).matrix, key.matrix)

    path = tmp_path / "participant.grpm"
    save_key(key, path)
    loaded = load_key(path)
    assert np.array_equal(loaded.matrix, key.matrix)
    assert np.allclose(project(loaded, np.ones(5)), project(key, np.ones(5)))


def test_key_blob_errors():
    blob = encode_key(generate_projection(2, 3, seed=0))
    with pytest.raises(BadMagicError):
        decode_key(b"XXXX" + blob[4:])
    with pytest.raises(TruncatedFileError):
        decode_key(blob[:-1])
    with pytest.raises(TruncatedFileError):
        decode_key(blob[:10])


def test_key_blob_from_a_newer_format():
    blob = bytearray(encode_key(generate_projection(2, 3, seed=0)))
    blob[4:6] = (2).to_bytes(2, "little")
    with pytest.raises(UnsupportedVersionError):
        decode_key(bytes(blob))
