"""
Gaussian random projection.

Random numbers come from numpy's ``Generator`` over the PCG64 bit generator,
seeded with a 64-bit unsigned integer; Gaussian draws use numpy's ziggurat
transform (``Generator.standard_normal``). Independent streams for
participants or parallel tasks are split off with ``SeedSequence.spawn``.
With the numpy version pinned in requirements.txt the same seed gives a
bitwise-identical matrix.
"""

import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from grpcoll.core.errors import (
    BadMagicError,
    DegenerateMatrixError,
    InvalidDimensionError,
    TruncatedFileError,
    UnachievableConditionError,
    UnsupportedVersionError,
)
from grpcoll.core.logging import get_logger
from grpcoll.core.seeding import make_rng
from grpcoll.schemas.dataset import Dataset
from grpcoll.schemas.projection import ConditionReport, ProjectionKey

logger = get_logger(__name__)

KEY_MAGIC = b"GRPM"
KEY_VERSION = 1
KEY_HEADER = struct.Struct("<4sHHII")

# singular values below this fraction of the largest count as zero
PINV_RCOND = 1e-12


def generate_projection(k: int, d: int, seed: int) -> ProjectionKey:
    if d < 1 or k < 1 or k > d:
        raise InvalidDimensionError(f"need 1 <= k <= d, got k={k}, d={d}")
    matrix = make_rng(seed).standard_normal((k, d))
    return ProjectionKey(matrix=matrix, k=k, d=d, seed=seed, scaled=True)


def key_from_matrix(
    matrix: np.ndarray, scaled: bool = False, seed: Optional[int] = None
) -> ProjectionKey:
    """Wrap an explicit matrix (conditioned, identity, imported) as a key."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] > matrix.shape[1] or matrix.size == 0:
        raise InvalidDimensionError(f"need a k x d matrix with k <= d, got {matrix.shape}")
    k, d = matrix.shape
    return ProjectionKey(matrix=matrix, k=k, d=d, seed=seed, scaled=scaled)


def project(key: ProjectionKey, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (key.d,):
        raise InvalidDimensionError(f"expected a vector of length {key.d}, got shape {x.shape}")
    y = key.matrix @ x
    if key.scaled:
        y = y / np.sqrt(key.k)
    return y


def project_batch(key: ProjectionKey, vectors: np.ndarray) -> np.ndarray:
    """Project the rows of an (n, d) array; same arithmetic as ``project``."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != key.d:
        raise InvalidDimensionError(f"expected (n, {key.d}) rows, got shape {vectors.shape}")
    y = vectors @ key.matrix.T
    if key.scaled:
        y = y / np.sqrt(key.k)
    return y


def project_dataset(key: ProjectionKey, ds: Dataset) -> Dataset:
    if ds.dimension != key.d:
        raise InvalidDimensionError(f"dataset dimension {ds.dimension} != key dimension {key.d}")
    projected = project_batch(key, ds.vectors)

    # interval image of the source box, widened by the data itself to absorb rounding
    a = key.effective_matrix
    pos, neg = np.maximum(a, 0.0), np.minimum(a, 0.0)
    lower = pos @ ds.lower + neg @ ds.upper
    upper = pos @ ds.upper + neg @ ds.lower
    if ds.size:
        lower = np.minimum(lower, projected.min(axis=0))
        upper = np.maximum(upper, projected.max(axis=0))
    return Dataset(
        vectors=projected,
        labels=ds.labels,
        class_count=ds.class_count,
        lower=lower,
        upper=upper,
        provenance=f"{ds.provenance}|grp(k={key.k})",
    )


def compression_ratio(key: ProjectionKey) -> float:
    return key.d / key.k


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR factors of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _geometric_condition(d: int, log_ratio: float) -> float:
    # spectrum s_i = exp(-i * log_ratio), i = 0..d-1
    exponents = np.arange(d) * log_ratio
    return float(np.sqrt(np.sum(np.exp(-2 * exponents))) * np.sqrt(np.sum(np.exp(2 * exponents))))


def generate_conditioned_matrix(d: int, target_condition: float, seed: int) -> np.ndarray:
    """
    Random d x d matrix with Frobenius condition number ``target_condition``.

    M = U diag(s) V^T with Haar-random U, V and a geometric spectrum
    s_i = r^(i-1); r in (0, 1] is found by bisection (on -ln r) so that
    ||s||_2 * ||1/s||_2 hits the target. r = 1 gives the minimum, d.
    """
    if d < 1:
        raise InvalidDimensionError(f"d must be positive, got {d}")
    if target_condition < d * (1 - 1e-12):
        raise UnachievableConditionError(
            f"condition number {target_condition} is below the minimum {d} for a {d}x{d} matrix"
        )
    if d == 1 and target_condition > 1 + 1e-12:
        raise UnachievableConditionError("a 1x1 matrix always has condition number 1")

    if target_condition <= d:
        log_ratio = 0.0
    else:
        lo, hi = 0.0, 1.0
        while _geometric_condition(d, hi) < target_condition:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _geometric_condition(d, mid) < target_condition:
                lo = mid
            else:
                hi = mid
        log_ratio = 0.5 * (lo + hi)

    spectrum = np.exp(-np.arange(d) * log_ratio)
    rng = make_rng(seed)
    u = random_orthogonal(d, rng)
    v = random_orthogonal(d, rng)
    matrix = (u * spectrum) @ v.T
    logger.debug(
        "conditioned_matrix_generated",
        d=d,
        target=target_condition,
        ratio=float(np.exp(-log_ratio)),
    )
    return matrix


def condition_number(matrix: np.ndarray) -> ConditionReport:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise InvalidDimensionError(f"expected a matrix, got shape {matrix.shape}")
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular.size == 0 or singular[0] == 0.0:
        raise DegenerateMatrixError("condition number of an all-zero matrix is undefined")
    kept = singular[singular > PINV_RCOND * singular[0]]
    fro = float(np.sqrt(np.sum(singular**2)))
    pinv_fro = float(np.sqrt(np.sum(1.0 / kept**2)))
    return ConditionReport(
        frobenius_norm=fro,
        pseudoinverse_frobenius_norm=pinv_fro,
        condition_number=fro * pinv_fro,
        rank=int(kept.size),
    )


def encode_key(key: ProjectionKey) -> bytes:
    if key.k >= 2**16:
        raise InvalidDimensionError(f"k={key.k} does not fit the u16 header field")
    header = KEY_HEADER.pack(KEY_MAGIC, KEY_VERSION, key.k, key.d, 0)
    return header + np.ascontiguousarray(key.matrix, dtype="<f8").tobytes()


def decode_key(blob: bytes, scaled: bool = True) -> ProjectionKey:
    if len(blob) < KEY_HEADER.size:
        raise TruncatedFileError(f"key blob has {len(blob)} bytes, header needs {KEY_HEADER.size}")
    magic, version, k, d, _reserved = KEY_HEADER.unpack_from(blob)
    if magic != KEY_MAGIC:
        raise BadMagicError(f"bad key magic {magic!r}")
    if version != KEY_VERSION:
        raise UnsupportedVersionError(f"unsupported key version {version}")
    expected = KEY_HEADER.size + 8 * k * d
    if len(blob) < expected:
        raise TruncatedFileError(f"key blob has {len(blob)} bytes, expected {expected}")
    matrix = np.frombuffer(blob, dtype="<f8", count=k * d, offset=KEY_HEADER.size).reshape(k, d)
    return key_from_matrix(matrix.astype(np.float64), scaled=scaled)


def save_key(key: ProjectionKey, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode_key(key))


def load_key(path: Union[str, Path], scaled: bool = True) -> ProjectionKey:
    return decode_key(Path(path).read_bytes(), scaled=scaled)
