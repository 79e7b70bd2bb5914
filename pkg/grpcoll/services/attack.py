"""
Worst-case reconstruction: the coordinator has learned a participant's key.

Two linear estimators are offered. ``min_norm_estimate`` is the pseudoinverse
solution: exact when k = d, consistent (A x_hat = y) and of minimum norm, but
for k < d it is the orthogonal projection of x onto the row space of A, so its
mean over random keys is (k/d) x. ``transpose_estimate`` (A^T y) is the
ensemble estimator whose mean is x and whose per-element variance is
(2/k) x_i^2 + (1/k) sum_{j != i} x_j^2; it is what ``predicted_variance``
describes and what the Monte Carlo verifier samples by default.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Optional, Tuple

import numpy as np

from grpcoll.core.errors import InvalidDimensionError
from grpcoll.core.logging import get_logger
from grpcoll.core.seeding import make_rng, spawn_seeds
from grpcoll.schemas.attack import ReconstructionReport
from grpcoll.schemas.projection import ProjectionKey
from grpcoll.services.projection import PINV_RCOND

logger = get_logger(__name__)

Estimator = Literal["transpose", "min_norm"]


def _check_projection(key: ProjectionKey, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (key.k,):
        raise InvalidDimensionError(f"expected a projection of length {key.k}, got shape {y.shape}")
    return y


def min_norm_estimate(key: ProjectionKey, y: np.ndarray) -> np.ndarray:
    y = _check_projection(key, y)
    return np.linalg.pinv(key.effective_matrix, rcond=PINV_RCOND) @ y


def transpose_estimate(key: ProjectionKey, y: np.ndarray) -> np.ndarray:
    y = _check_projection(key, y)
    norm = np.sqrt(key.k) if key.scaled else float(key.k)
    return key.matrix.T @ y / norm


def predicted_variance(x: np.ndarray, k: int) -> np.ndarray:
    if k < 1:
        raise InvalidDimensionError(f"k must be positive, got {k}")
    x = np.asarray(x, dtype=np.float64)
    return (np.dot(x, x) + x**2) / k


def reconstruct(
    key: ProjectionKey,
    y: np.ndarray,
    truth: Optional[np.ndarray] = None,
    estimator: Estimator = "min_norm",
) -> ReconstructionReport:
    """Estimate plus the predicted error; without ``truth`` the estimate is the plug-in."""
    estimate = min_norm_estimate(key, y) if estimator == "min_norm" else transpose_estimate(key, y)
    reference = estimate if truth is None else np.asarray(truth, dtype=np.float64)
    variance = predicted_variance(reference, key.k)
    l2_error = None if truth is None else float(np.linalg.norm(estimate - reference))
    return ReconstructionReport(
        estimate=estimate,
        per_element_variance=variance,
        mean_variance=float(variance.mean()),
        l2_error=l2_error,
    )


def _chunk_moments(
    x: np.ndarray, k: int, trials: int, seed: int, estimator: Estimator
) -> Tuple[int, np.ndarray, np.ndarray]:
    d = x.shape[0]
    a = make_rng(seed).standard_normal((trials, k, d)) / np.sqrt(k)
    y = a @ x
    if estimator == "transpose":
        estimates = np.einsum("tkd,tk->td", a, y)
    else:
        estimates = np.einsum("tdk,tk->td", np.linalg.pinv(a, rcond=PINV_RCOND), y)
    mean = estimates.mean(axis=0)
    m2 = ((estimates - mean) ** 2).sum(axis=0)
    return trials, mean, m2


def reconstruction_moments(
    x: np.ndarray,
    k: int,
    trials: int,
    seed: int,
    estimator: Estimator = "transpose",
    chunk_size: int = 10_000,
    workers: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-element sample mean and variance of an estimator over ``trials`` random keys.

    Trials are split into chunks with independent streams; chunk results are
    merged in chunk order, so the output does not depend on ``workers``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or not 1 <= k <= x.shape[0]:
        raise InvalidDimensionError(f"need a vector and 1 <= k <= d, got shape {x.shape}, k={k}")
    if trials < 2:
        raise InvalidDimensionError("need at least two trials for a variance")
    if trials < 1000:
        logger.warning("few_reconstruction_trials", trials=trials)

    # keep each chunk's (trials, k, d) key stack near 160 MB
    chunk_size = max(1, min(chunk_size, 20_000_000 // (k * x.shape[0])))
    sizes = [chunk_size] * (trials // chunk_size)
    if trials % chunk_size:
        sizes.append(trials % chunk_size)
    seeds = spawn_seeds(seed, len(sizes))

    def run(i: int):
        return _chunk_moments(x, k, sizes[i], seeds[i], estimator)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]

    count, mean, m2 = parts[0]
    for n_b, mean_b, m2_b in parts[1:]:
        total = count + n_b
        delta = mean_b - mean
        mean = mean + delta * n_b / total
        m2 = m2 + m2_b + delta**2 * count * n_b / total
        count = total
    return mean, m2 / (count - 1)


def empirical_reconstruction_variance(
    x: np.ndarray,
    k: int,
    trials: int,
    seed: int,
    estimator: Estimator = "transpose",
    workers: int = 1,
) -> np.ndarray:
    _, variance = reconstruction_moments(x, k, trials, seed, estimator=estimator, workers=workers)
    return variance
