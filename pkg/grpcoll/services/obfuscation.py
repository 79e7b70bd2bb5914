"""Participant-side obfuscation: GRP projection, Laplace noise, or none."""

import time
from typing import Optional, Tuple

import numpy as np

from grpcoll.core.seeding import make_rng, spawn_seeds
from grpcoll.schemas.dataset import Dataset
from grpcoll.schemas.obfuscation import DpObfuscation, GrpObfuscation, NoObfuscation, Obfuscation
from grpcoll.schemas.privacy import NoiseBudget
from grpcoll.services.privacy import identity_query_sensitivity, noisify_dataset
from grpcoll.services.projection import generate_projection, key_from_matrix, project_dataset


def grp(k: int, d: int, seed: int) -> GrpObfuscation:
    return GrpObfuscation(key=generate_projection(k, d, seed))


def grp_from_matrix(matrix: np.ndarray, seed: Optional[int] = None) -> GrpObfuscation:
    """Unscaled explicit key (conditioned or identity matrices)."""
    return GrpObfuscation(key=key_from_matrix(matrix, scaled=False, seed=seed))


def dp(ds: Dataset, epsilon: float, seed: int) -> DpObfuscation:
    """Laplace budget with the identity-query sensitivity of ``ds``'s domain."""
    sensitivity = identity_query_sensitivity(ds.lower, ds.upper)
    return DpObfuscation(budget=NoiseBudget(epsilon=epsilon, sensitivity=sensitivity), seed=seed)


def dp_with_scale(scale: float, seed: int, sensitivity: float = 1.0) -> DpObfuscation:
    return DpObfuscation(budget=NoiseBudget.from_scale(scale, sensitivity=sensitivity), seed=seed)


def output_dimension(obfuscation: Obfuscation, d: int) -> int:
    return obfuscation.key.k if isinstance(obfuscation, GrpObfuscation) else d


def noise_rng(obfuscation: DpObfuscation, stream: int) -> np.random.Generator:
    """Stream 0 noises the training shard, stream 1 the test shard."""
    return make_rng(spawn_seeds(obfuscation.seed, 2)[stream])


def obfuscate_dataset(
    ds: Dataset,
    obfuscation: Obfuscation,
    rng: Optional[np.random.Generator] = None,
    stream: int = 0,
) -> Tuple[Dataset, float]:
    """
    Obfuscated copy of ``ds`` and the wall-clock seconds spent obfuscating.

    DP noise is drawn from ``rng`` when given, otherwise from ``stream`` of the scheme's seed.
    """
    started = time.perf_counter()
    if isinstance(obfuscation, GrpObfuscation):
        out = project_dataset(obfuscation.key, ds)
    elif isinstance(obfuscation, DpObfuscation):
        out = noisify_dataset(ds, obfuscation.budget, rng or noise_rng(obfuscation, stream))
    elif isinstance(obfuscation, NoObfuscation):
        out = ds
    else:
        raise TypeError(f"unknown obfuscation {obfuscation!r}")
    return out, time.perf_counter() - started
