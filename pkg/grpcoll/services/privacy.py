"""Laplace-mechanism noisification of data vectors (the epsilon-DP baseline)."""

from typing import Tuple, Union

import numpy as np

from grpcoll.core.errors import InvalidBoundsError, InvalidScaleError
from grpcoll.schemas.dataset import Dataset
from grpcoll.schemas.privacy import NoiseBudget


def laplace_noise(
    scale: float, size: Union[int, Tuple[int, ...]], rng: np.random.Generator
) -> np.ndarray:
    """
    Zero-mean Laplace draws by inverse CDF.

    x = -scale * sign(u) * ln(1 - 2|u|) with u uniform on (-1/2, 1/2).
    ``Generator.random`` is uniform on [0, 1), so u = -1/2 is possible and is
    redrawn.
    """
    if not scale > 0 or not np.isfinite(scale):
        raise InvalidScaleError(f"Laplace scale must be positive, got {scale}")
    u = rng.random(size) - 0.5
    edge = u == -0.5
    while np.any(edge):
        u[edge] = rng.random(int(edge.sum())) - 0.5
        edge = u == -0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    return float(laplace_noise(scale, 1, rng)[0])


def identity_query_sensitivity(lower: np.ndarray, upper: np.ndarray) -> float:
    """L1 diameter of the data domain: the global sensitivity of F(D) = x."""
    lower = np.asarray(lower, dtype=np.float64).reshape(-1)
    upper = np.asarray(upper, dtype=np.float64).reshape(-1)
    if lower.size == 0 or lower.shape != upper.shape:
        raise InvalidBoundsError("bounds must be non-empty and of equal length")
    width = upper - lower
    if np.any(width < 0):
        raise InvalidBoundsError(f"upper < lower at dimensions {np.flatnonzero(width < 0).tolist()}")
    sensitivity = float(width.sum())
    if sensitivity <= 0:
        raise InvalidBoundsError("domain has zero width in every dimension")
    return sensitivity


def noisify(x: np.ndarray, budget: NoiseBudget, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x + laplace_noise(budget.scale, x.shape, rng)


def noisify_dataset(ds: Dataset, budget: NoiseBudget, rng: np.random.Generator) -> Dataset:
    """Fresh noise for every vector; labels untouched, bounds widened to the noisy values."""
    noisy = ds.vectors + laplace_noise(budget.scale, ds.vectors.shape, rng)
    lower, upper = ds.lower, ds.upper
    if ds.size:
        lower = np.minimum(lower, noisy.min(axis=0))
        upper = np.maximum(upper, noisy.max(axis=0))
    return Dataset(
        vectors=noisy,
        labels=ds.labels,
        class_count=ds.class_count,
        lower=lower,
        upper=upper,
        provenance=f"{ds.provenance}|laplace(scale={budget.scale:.6g})",
    )


def budget_for_variance(variance: float, sensitivity: float) -> NoiseBudget:
    """Budget whose per-element noise variance 2*scale^2 equals ``variance``."""
    if variance <= 0:
        raise InvalidScaleError(f"variance must be positive, got {variance}")
    return NoiseBudget.from_scale(float(np.sqrt(variance / 2.0)), sensitivity=sensitivity)
