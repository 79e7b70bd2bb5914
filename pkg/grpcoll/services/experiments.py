"""
Experiment harness.

Every ``exp_*`` function returns an ExperimentReport whose ``config`` and
``seeds`` echo everything needed to re-run it. Presets scale the workloads:
``full`` uses the whole dataset, ``smoke`` a seeded 10% sample with at most
20 participants and a short training schedule.
"""

import asyncio
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from grpcoll.core.config import settings
from grpcoll.core.errors import InvalidCompressionError, InvalidDimensionError, UnknownExperimentError
from grpcoll.core.logging import get_logger, log_experiment_event
from grpcoll.core.seeding import make_rng, spawn_seeds
from grpcoll.protocol.wire import session_bytes
from grpcoll.schemas.dataset import Dataset
from grpcoll.schemas.nn import TrainConfig
from grpcoll.schemas.obfuscation import Obfuscation
from grpcoll.schemas.report import ExperimentReport, Mode, RunMetrics
from grpcoll.services import obfuscation as obf
from grpcoll.services.assembly import assemble
from grpcoll.services.attack import (
    empirical_reconstruction_variance,
    min_norm_estimate,
    predicted_variance,
    reconstruction_moments,
)
from grpcoll.services.datasets import (
    augment_gaussian,
    load_mnist,
    load_spambase,
    normalize,
    shard,
    shards,
    spambase_noise_std,
    split,
    subset,
    synth_gaussian_two_class,
)
from grpcoll.services.imaging import save_image_grid, save_scatter
from grpcoll.services.nn.network import NetworkModel, build_model
from grpcoll.services.privacy import budget_for_variance, identity_query_sensitivity, laplace_noise
from grpcoll.services.projection import (
    condition_number,
    generate_conditioned_matrix,
    generate_projection,
    project,
    project_batch,
    save_key,
)
from grpcoll.services.report import aggregate, new_report
from grpcoll.services.simulation import ModelBuilder, SchemeKind, make_schemes, run_networked_async, simulate_run

logger = get_logger(__name__)

DATASET_IDS = ("mnist", "spambase", "toy2d", "toy10d")
DEFAULT_MODELS = {"mnist": "cnn", "spambase": "spam_mlp", "toy2d": "toy_mlp", "toy10d": "toy_mlp"}

# published figures the reports carry next to the measured ones
REFERENCES: Dict[str, Dict[str, Any]] = {
    "exp-scaling": {
        "mnist": {"accuracy_n40": 0.9687, "accuracy_n400": 0.8618, "supported_n_at_0.90": 280},
        "spambase": {"accuracy_n1": 0.96, "accuracy_n200": 0.8325, "plain_mlp": 0.9652},
        "toy2d": {"plain_mlp": 0.99},
    },
    "exp-compression": {"mnist": {"accuracy_rho1": 0.9552, "accuracy_rho2.33": 0.9285}},
    "exp-dp": {"mnist": {"accuracy_eps100": 0.866, "accuracy_eps10": 0.114}},
    "exp-attack": {
        "mnist": {
            "mean_predicted_variance_255": 410.0,
            "matched_epsilon": 18.89,
            "grp_dnn_n1_accuracy": 0.9482,
            "dp_dnn_matched_accuracy": 0.1286,
        }
    },
    "exp-overhead": {
        "mnist": {
            "projected_mb_per_participant": 33.6,
            "projection_seconds": 0.96,
            "test_projection_seconds": 0.16,
            "test_mb_per_participant": 5.6,
            "coordinator_test_seconds": 40.88,
        }
    },
}

TOY_SAMPLES_PER_CLASS = 1000
TOY_MEAN_MAGNITUDE = 2.0
TOY_TEST_FRACTION = 0.2
SPAM_TRAIN_TARGET = 40_000
SPAM_TEST_TARGET = 400
SPAM_TEST_FRACTION = 0.1
LAMBDA_MATCHED = float(np.sqrt(410.0 / 2.0))


class Preset(BaseModel):
    name: str
    sample_fraction: float = Field(gt=0, le=1)
    max_participants: Optional[int] = Field(default=None, gt=0)
    epochs: Optional[int] = Field(default=None, gt=0)
    trials: int = Field(default=100_000, gt=1)


PRESETS: Dict[str, Preset] = {
    "smoke": Preset(name="smoke", sample_fraction=0.1, max_participants=20, epochs=3, trials=10_000),
    "full": Preset(name="full", sample_fraction=1.0),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownExperimentError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None


def _check_dataset_id(dataset_id: str) -> None:
    if dataset_id not in DATASET_IDS:
        raise UnknownExperimentError(f"unknown dataset {dataset_id!r}; expected one of {list(DATASET_IDS)}")


def _sample(ds: Dataset, fraction: float, seed: int) -> Dataset:
    if fraction >= 1.0:
        return ds
    n = max(1, int(round(ds.size * fraction)))
    order = make_rng(seed).permutation(ds.size)
    return subset(ds, np.sort(order[:n]), f"{ds.provenance}|sample{fraction:g}")


def load_experiment_data(
    dataset_id: str, preset: Preset, seed: int = 0, scale: str = "unit_range"
) -> Tuple[Dataset, Dataset]:
    """
    Train and test sets for a dataset id.

    MNIST and spambase come from GRPC0LL_DATA_DIR; ``scale="none"`` keeps raw
    values (MNIST pixels on [0, 255]). Both splits are scaled with the
    training split's bounds.
    """
    _check_dataset_id(dataset_id)
    if dataset_id == "mnist":
        train_set, test_set = load_mnist("train"), load_mnist("test")
        train_set = _sample(train_set, preset.sample_fraction, seed)
        test_set = _sample(test_set, preset.sample_fraction, seed + 1)
    elif dataset_id == "spambase":
        base = load_spambase()
        base_train, _ = split(base, SPAM_TEST_FRACTION, seed)
        target_train = int(round(SPAM_TRAIN_TARGET * preset.sample_fraction))
        target_test = int(round(SPAM_TEST_TARGET * preset.sample_fraction))
        train_set, test_set = augment_gaussian(
            base,
            spambase_noise_std(base_train),
            max(target_train, base_train.size),
            max(1, target_test),
            seed,
            test_fraction=SPAM_TEST_FRACTION,
        )
    else:
        d = 2 if dataset_id == "toy2d" else 10
        n = max(10, int(round(TOY_SAMPLES_PER_CLASS * preset.sample_fraction)))
        data = synth_gaussian_two_class(d, TOY_MEAN_MAGNITUDE, n, seed)
        train_set, test_set = split(data, TOY_TEST_FRACTION, seed)
        # toy data is used on its natural scale
        return train_set, test_set
    return normalize(train_set, scale), normalize(test_set, scale, reference=train_set)


def model_builder(model_id: str, seed: int = 0) -> ModelBuilder:
    def build(input_dim: int, class_count: int) -> NetworkModel:
        return build_model(model_id, input_dim, class_count, seed)

    return build


def _train_config(config: Optional[TrainConfig], preset: Preset) -> TrainConfig:
    config = config or TrainConfig()
    if preset.epochs is not None and preset.epochs < config.epochs:
        config = config.model_copy(update={"epochs": preset.epochs})
    return config


def _participant_grid(participants: Sequence[int], preset: Preset) -> List[int]:
    grid: List[int] = []
    for n in participants:
        if n < 1:
            raise InvalidDimensionError(f"participant count must be positive, got {n}")
        capped = min(n, preset.max_participants) if preset.max_participants else n
        if capped != n:
            logger.warning("participants_capped", requested=n, used=capped, preset=preset.name)
        if capped not in grid:
            grid.append(capped)
    return grid


class _Cell(BaseModel):
    """One independent (schemes, mode) run of an experiment."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    label: str
    schemes: List[Any]
    mode: Mode = Mode.COLLABORATIVE
    condition: Optional[float] = None


def _run_cells(
    experiment_id: str,
    cells: Sequence[_Cell],
    train_set: Dataset,
    test_set: Dataset,
    builder: ModelBuilder,
    config: TrainConfig,
    shard_seed: int,
    parallel_runs: int = 1,
) -> List[RunMetrics]:
    """Run cells in order, or ``parallel_runs`` at a time; results keep cell order."""

    def run(cell: _Cell) -> RunMetrics:
        metrics, _ = simulate_run(
            train_set, test_set, cell.schemes, builder, config, cell.mode, shard_seed, cell.label
        )
        if cell.condition is not None:
            metrics.condition = cell.condition
        log_experiment_event(
            logger,
            experiment_id,
            "cell_done",
            metrics={"accuracy": metrics.accuracy},
            label=cell.label,
        )
        return metrics

    if parallel_runs > 1:
        with ThreadPoolExecutor(max_workers=parallel_runs) as pool:
            return list(pool.map(run, cells))
    return [run(cell) for cell in cells]


def _plain_cell(train_set: Dataset) -> _Cell:
    return _Cell(label="plain", schemes=make_schemes("none", 1, train_set, 0), mode=Mode.PLAIN)


def _base_report(
    experiment_id: str,
    dataset_id: str,
    preset: Preset,
    config: TrainConfig,
    seed: int,
    **extra_config: Any,
) -> ExperimentReport:
    report = new_report(
        experiment_id,
        config={
            "dataset": dataset_id,
            "preset": preset.model_dump(),
            "train": config.model_dump(),
            **extra_config,
        },
        seeds={"base": seed, "train": config.seed, "shard": seed},
    )
    report.references = dict(REFERENCES.get(experiment_id, {}).get(dataset_id, {}))
    return report


def exp_scaling(
    dataset_id: str,
    participants: Sequence[int],
    scheme: SchemeKind = "grp",
    model_id: Optional[str] = None,
    config: Optional[TrainConfig] = None,
    preset: Union[str, Preset] = "full",
    seed: int = 0,
    key_sets: int = 1,
    include_ncl: bool = True,
    parallel_runs: int = 1,
    k: Optional[int] = None,
    epsilon: Optional[float] = None,
) -> ExperimentReport:
    """
    Accuracy against the number of participants.

    Per N: one collaborative run and, with ``include_ncl``, the matching
    non-collaborative run (min/mean/max). ``key_sets`` > 1 repeats every N
    with freshly drawn keys and summarizes mean/min/max across key sets. A
    plain (unobfuscated, N=1) run is the reference line.
    """
    preset = get_preset(preset) if isinstance(preset, str) else preset
    config = _train_config(config, preset)
    model_id = model_id or DEFAULT_MODELS.get(dataset_id, "")
    train_set, test_set = load_experiment_data(dataset_id, preset, seed)
    builder = model_builder(model_id, config.seed)
    grid = _participant_grid(participants, preset)
    key_seeds = spawn_seeds(seed, max(1, key_sets))

    cells = [_plain_cell(train_set)]
    for n in grid:
        for r, key_seed in enumerate(key_seeds):
            schemes = make_schemes(scheme, n, train_set, key_seed, k=k, epsilon=epsilon)
            cells.append(_Cell(label=f"{scheme}-dnn-n{n}-r{r}", schemes=schemes))
            if include_ncl:
                cells.append(
                    _Cell(label=f"{scheme}-ncl-n{n}-r{r}", schemes=schemes, mode=Mode.NON_COLLABORATIVE)
                )

    report = _base_report(
        "exp-scaling",
        dataset_id,
        preset,
        config,
        seed,
        participants=grid,
        scheme=scheme,
        model=model_id,
        key_sets=key_sets,
        k=k,
    )
    report.runs = _run_cells("exp-scaling", cells, train_set, test_set, builder, config, seed, parallel_runs)
    for n in grid:
        for prefix in ("dnn", "ncl") if include_ncl else ("dnn",):
            runs = [run for run in report.runs if run.label.startswith(f"{scheme}-{prefix}-n{n}-")]
            report.summary[f"{prefix}_n{n}"] = aggregate(runs)
    report.summary["plain"] = report.run("plain").accuracy
    return report


def exp_compression(
    dataset_id: str,
    rhos: Sequence[float],
    participants: int = 100,
    model_id: Optional[str] = None,
    config: Optional[TrainConfig] = None,
    preset: Union[str, Preset] = "full",
    seed: int = 0,
    parallel_runs: int = 1,
) -> ExperimentReport:
    """
    Accuracy against the compression ratio rho = d/k at fixed N.

    Keys come from the same seed as ``exp_scaling``'s first key set, so the
    rho=1 run equals the scaling run at the same N.
    """
    preset = get_preset(preset) if isinstance(preset, str) else preset
    for rho in rhos:
        if rho < 1:
            raise InvalidCompressionError(f"compression ratio must be at least 1, got {rho}")
    config = _train_config(config, preset)
    model_id = model_id or DEFAULT_MODELS.get(dataset_id, "")
    train_set, test_set = load_experiment_data(dataset_id, preset, seed)
    builder = model_builder(model_id, config.seed)
    (n,) = _participant_grid([participants], preset)
    d = train_set.dimension
    key_seed = spawn_seeds(seed, 1)[0]

    cells = []
    for rho in rhos:
        k = max(1, int(round(d / rho)))
        cells.append(
            _Cell(label=f"grp-dnn-n{n}-rho{rho:g}", schemes=make_schemes("grp", n, train_set, key_seed, k=k))
        )
    report = _base_report(
        "exp-compression", dataset_id, preset, config, seed, rhos=list(rhos), participants=n, model=model_id
    )
    report.runs = _run_cells("exp-compression", cells, train_set, test_set, builder, config, seed, parallel_runs)
    return report


def _dp_schemes(
    participants: int, seed: int, sensitivity: float, epsilon: Optional[float] = None, scale: Optional[float] = None
) -> List[Obfuscation]:
    seeds = spawn_seeds(seed, participants)
    if scale is None:
        scale = sensitivity / epsilon
    return [obf.dp_with_scale(scale, s, sensitivity=sensitivity) for s in seeds]


def exp_dp(
    dataset_id: str,
    epsilons: Sequence[float],
    participants: int = 1,
    model_id: Optional[str] = None,
    config: Optional[TrainConfig] = None,
    preset: Union[str, Preset] = "full",
    seed: int = 0,
    sensitivity: Optional[float] = None,
    out_dir: Optional[Union[str, Path]] = None,
    image_grid: Optional[bool] = None,
    parallel_runs: int = 1,
) -> ExperimentReport:
    """
    Accuracy of Laplace-noised training data against epsilon.

    The sensitivity defaults to the L1 diameter of the training split's
    domain (784 for MNIST on [0, 1]). Each run also records the noise scale
    on the raw pixel scale. With ``out_dir`` an image grid of original,
    projected and noise-added test images is written there.
    """
    preset = get_preset(preset) if isinstance(preset, str) else preset
    for eps in epsilons:
        if eps <= 0:
            raise ValueError(f"epsilon must be positive, got {eps}")
    config = _train_config(config, preset)
    model_id = model_id or DEFAULT_MODELS.get(dataset_id, "")
    train_set, test_set = load_experiment_data(dataset_id, preset, seed)
    builder = model_builder(model_id, config.seed)
    (n,) = _participant_grid([participants], preset)
    sensitivity = sensitivity or identity_query_sensitivity(train_set.lower, train_set.upper)
    noise_seed = spawn_seeds(seed, 1)[0]

    cells = [_plain_cell(train_set)]
    for eps in epsilons:
        cells.append(
            _Cell(label=f"dp-dnn-eps{eps:g}", schemes=_dp_schemes(n, noise_seed, sensitivity, epsilon=eps))
        )
    report = _base_report(
        "exp-dp",
        dataset_id,
        preset,
        config,
        seed,
        epsilons=list(epsilons),
        participants=n,
        model=model_id,
        sensitivity=sensitivity,
    )
    report.runs = _run_cells("exp-dp", cells, train_set, test_set, builder, config, seed, parallel_runs)
    pixel_range = 255.0 if dataset_id == "mnist" else 1.0
    for run in report.runs:
        if run.noise_scale is not None:
            run.extra["noise_scale_raw"] = run.noise_scale * pixel_range
    report.notes.append(
        f"sensitivity {sensitivity:g} is the L1 domain diameter of the scaled training data; "
        f"raw-scale noise multiplies the scale by {pixel_range:g}"
    )

    if out_dir is not None and (image_grid if image_grid is not None else dataset_id == "mnist"):
        report.artifacts.append(str(_dp_image_grid(test_set, epsilons, sensitivity, seed, Path(out_dir))))
    return report


def _dp_image_grid(
    test_set: Dataset, epsilons: Sequence[float], sensitivity: float, seed: int, out_dir: Path, count: int = 8
) -> Path:
    originals = test_set.vectors[:count]
    key = generate_projection(test_set.dimension, test_set.dimension, seed)
    rows: Dict[str, np.ndarray] = {
        "original": originals,
        "projected": project_batch(key, originals),
    }
    rng = make_rng(spawn_seeds(seed, 2)[1])
    for eps in epsilons:
        rows[f"eps={eps:g}"] = originals + laplace_noise(sensitivity / eps, originals.shape, rng)
    return save_image_grid(rows, out_dir / "exp-dp_images.png", columns=count)


def exp_condition(
    d: int = 10,
    conditions: Sequence[float] = (10, 30, 100, 300),
    model_id: str = "toy_mlp",
    config: Optional[TrainConfig] = None,
    preset: Union[str, Preset] = "full",
    seed: int = 0,
    mean_magnitude: float = TOY_MEAN_MAGNITUDE,
    parallel_runs: int = 1,
) -> ExperimentReport:
    """
    Single-participant accuracy on d-dimensional two-class Gaussian data
    projected by square matrices of increasing Frobenius condition number.
    """
    preset = get_preset(preset) if isinstance(preset, str) else preset
    config = _train_config(config, preset)
    n = max(10, int(round(TOY_SAMPLES_PER_CLASS * preset.sample_fraction)))
    data = synth_gaussian_two_class(d, mean_magnitude, n, seed)
    train_set, test_set = split(data, TOY_TEST_FRACTION, seed)
    builder = model_builder(model_id, config.seed)

    cells = [_plain_cell(train_set)]
    for kappa, matrix_seed in zip(conditions, spawn_seeds(seed, len(conditions))):
        matrix = generate_conditioned_matrix(d, kappa, matrix_seed)
        measured = condition_number(matrix).condition_number
        cells.append(
            _Cell(
                label=f"grp-dnn-kappa{kappa:g}",
                schemes=[obf.grp_from_matrix(matrix, seed=matrix_seed)],
                condition=measured,
            )
        )
    report = new_report(
        "exp-condition",
        config={
            "d": d,
            "conditions": list(conditions),
            "mean_magnitude": mean_magnitude,
            "samples_per_class": n,
            "preset": preset.model_dump(),
            "train": config.model_dump(),
            "model": model_id,
        },
        seeds={"base": seed, "train": config.seed, "shard": seed},
    )
    report.runs = _run_cells("exp-condition", cells, train_set, test_set, builder, config, seed, parallel_runs)
    return report


def exp_attack(
    dataset_id: str = "mnist",
    k: Optional[int] = None,
    trials: int = 1000,
    preset: Union[str, Preset] = "full",
    seed: int = 0,
    probe_samples: int = 1,
    train_comparison: bool = False,
    config: Optional[TrainConfig] = None,
    model_id: Optional[str] = None,
) -> ExperimentReport:
    """
    Worst-case reconstruction when the key leaks.

    Reports the dataset-average predicted per-element variance on the raw
    and the unit scale, the Monte Carlo variance for ``probe_samples`` test
    vectors, the Laplace scale (and epsilon, per sensitivity convention)
    whose noise variance matches it, and the k = d exact-recovery error.
    ``train_comparison`` additionally trains GRP (N=1, k) against DP at the
    matched scale, with the scale applied both literally to the unit-scale
    data and rescaled to it.
    """
    preset = get_preset(preset) if isinstance(preset, str) else preset
    raw_train, raw_test = load_experiment_data(dataset_id, preset, seed, scale="none")
    d = raw_train.dimension
    k = k or max(1, d - 1)
    if not 1 <= k <= d:
        raise InvalidDimensionError(f"need 1 <= k <= {d}, got {k}")
    value_range = float(np.max(raw_train.upper - raw_train.lower)) or 1.0

    per_sample = (np.sum(raw_train.vectors**2, axis=1) * (d + 1) / d) / k
    mean_predicted = float(per_sample.mean())
    summary: Dict[str, Any] = {
        "k": k,
        "d": d,
        "value_range": value_range,
        "mean_predicted_variance_raw": mean_predicted,
        "mean_predicted_variance_unit": mean_predicted / value_range**2,
    }

    probes = []
    for i, probe_seed in zip(range(min(probe_samples, raw_test.size)), spawn_seeds(seed, probe_samples)):
        x = raw_test.vectors[i]
        empirical = empirical_reconstruction_variance(x, k, trials, probe_seed)
        probes.append(
            {
                "index": i,
                "predicted_mean_variance": float(predicted_variance(x, k).mean()),
                "empirical_mean_variance": float(empirical.mean()),
            }
        )
    summary["probes"] = probes

    raw_sensitivity = identity_query_sensitivity(raw_train.lower, raw_train.upper)
    matched = budget_for_variance(mean_predicted, raw_sensitivity)
    summary["matched_lambda"] = matched.scale
    summary["matched_lambda_reference"] = LAMBDA_MATCHED
    summary["matched_epsilon_raw"] = matched.epsilon
    summary["matched_lambda_unit"] = matched.scale / value_range
    summary["implied_reference_sensitivity"] = LAMBDA_MATCHED * 18.89

    full_key = generate_projection(d, d, seed)
    x = raw_test.vectors[0]
    recovered = min_norm_estimate(full_key, project(full_key, x))
    summary["exact_recovery_max_abs_error"] = float(np.max(np.abs(recovered - x)))

    report = new_report(
        "exp-attack",
        config={
            "dataset": dataset_id,
            "k": k,
            "trials": trials,
            "probe_samples": probe_samples,
            "preset": preset.model_dump(),
        },
        seeds={"base": seed},
    )
    report.references = dict(REFERENCES["exp-attack"].get(dataset_id, {}))
    report.summary = summary

    if train_comparison:
        config = _train_config(config, preset)
        model_id = model_id or DEFAULT_MODELS.get(dataset_id, "")
        train_set, test_set = load_experiment_data(dataset_id, preset, seed)
        builder = model_builder(model_id, config.seed)
        sensitivity = identity_query_sensitivity(train_set.lower, train_set.upper)
        key_seed = spawn_seeds(seed, 1)[0]
        cells = [
            _Cell(label=f"grp-dnn-n1-k{k}", schemes=make_schemes("grp", 1, train_set, key_seed, k=k)),
            _Cell(
                label="dp-dnn-matched-literal",
                schemes=_dp_schemes(1, key_seed, sensitivity, scale=LAMBDA_MATCHED),
            ),
            _Cell(
                label="dp-dnn-matched-rescaled",
                schemes=_dp_schemes(1, key_seed, sensitivity, scale=LAMBDA_MATCHED / value_range),
            ),
        ]
        report.config["train"] = config.model_dump()
        report.config["model"] = model_id
        report.seeds["train"] = config.seed
        report.runs = _run_cells("exp-attack", cells, train_set, test_set, builder, config, seed)
    log_experiment_event(
        logger,
        "exp-attack",
        "done",
        metrics={"mean_predicted_variance_raw": round(mean_predicted, 3), "k": k},
    )
    return report


def exp_overhead(
    participants: int = 14,
    dataset_id: str = "mnist",
    scheme: SchemeKind = "grp",
    model_id: Optional[str] = None,
    config: Optional[TrainConfig] = None,
    preset: Union[str, Preset] = "full",
    seed: int = 0,
    chunk_size: int = settings.CHUNK_SIZE,
    timeout_secs: float = settings.TIMEOUT_SECS,
    compare_simulated: bool = True,
    epsilon: Optional[float] = None,
) -> ExperimentReport:
    """
    Networked run over 127.0.0.1: per-participant obfuscation time, exact
    bytes on the wire against the analytic session size, coordinator train
    and classification time. With ``compare_simulated`` the same run is
    repeated in-process and both accuracies are recorded.
    """
    preset = get_preset(preset) if isinstance(preset, str) else preset
    config = _train_config(config, preset)
    model_id = model_id or DEFAULT_MODELS.get(dataset_id, "")
    train_set, test_set = load_experiment_data(dataset_id, preset, seed)
    builder = model_builder(model_id, config.seed)
    (n,) = _participant_grid([participants], preset)
    key_seed = spawn_seeds(seed, 1)[0]
    schemes = make_schemes(scheme, n, train_set, key_seed, epsilon=epsilon or 100.0)

    run, _ = asyncio.run(
        run_networked_async(
            train_set,
            test_set,
            schemes,
            builder,
            config,
            shard_seed=seed,
            label=f"{scheme}-networked-n{n}",
            chunk_size=chunk_size,
            timeout_secs=timeout_secs,
        )
    )
    k = run.k or train_set.dimension
    analytic = [session_bytes(p.train_samples, k, chunk_size) for p in run.per_participant]
    run.extra["analytic_bytes"] = float(sum(analytic))
    run.extra["bytes_match"] = float(all(p.bytes_sent == a for p, a in zip(run.per_participant, analytic)))
    run.extra["mean_participant_mb"] = float(np.mean([p.bytes_sent for p in run.per_participant]) / 1e6)

    report = _base_report(
        "exp-overhead",
        dataset_id,
        preset,
        config,
        seed,
        participants=n,
        scheme=scheme,
        model=model_id,
        chunk_size=chunk_size,
        timeout_secs=timeout_secs,
    )
    report.runs.append(run)
    if compare_simulated:
        simulated, _ = simulate_run(
            train_set, test_set, schemes, builder, config, Mode.COLLABORATIVE, seed, f"{scheme}-simulated-n{n}",
            chunk_size,
        )
        report.runs.append(simulated)
        report.summary["accuracy_matches_simulated"] = simulated.accuracy == run.accuracy
    report.summary["bytes_match_analytic"] = bool(run.extra["bytes_match"])
    return report


def _dot_distance_moments(k: int, d: int, trials: int, seed: int) -> Dict[str, float]:
    rng = make_rng(seed)
    x1, x2 = rng.standard_normal(d), rng.standard_normal(d)
    x1 /= np.linalg.norm(x1)
    x2 /= np.linalg.norm(x2)
    dots, dists = [], []
    chunk = max(1, 20_000_000 // (k * d))
    for start in range(0, trials, chunk):
        a = rng.standard_normal((min(chunk, trials - start), k, d)) / np.sqrt(k)
        y1, y2 = a @ x1, a @ x2
        dots.append(np.einsum("tk,tk->t", y1, y2))
        dists.append(np.sum((y1 - y2) ** 2, axis=1))
    dot, dist = np.concatenate(dots), np.concatenate(dists)
    true_dot, true_dist = float(x1 @ x2), float(np.sum((x1 - x2) ** 2))
    dot_se = float(dot.std(ddof=1) / np.sqrt(trials))
    dist_se = float(dist.std(ddof=1) / np.sqrt(trials))
    return {
        "true_dot": true_dot,
        "dot_mean": float(dot.mean()),
        "dot_standard_error": dot_se,
        "dot_variance": float(dot.var(ddof=1)),
        "dot_variance_bound": 2.0 / k,
        "dot_unbiased": abs(dot.mean() - true_dot) <= 5 * dot_se,
        "dot_variance_ok": float(dot.var(ddof=1)) <= 1.1 * 2.0 / k,
        "true_distance": true_dist,
        "distance_mean": float(dist.mean()),
        "distance_standard_error": dist_se,
        "distance_variance": float(dist.var(ddof=1)),
        "distance_variance_bound": 32.0 / k,
        "distance_unbiased": abs(dist.mean() - true_dist) <= 5 * dist_se,
        "distance_variance_ok": float(dist.var(ddof=1)) <= 1.1 * 32.0 / k,
    }


def _reconstruction_checks(k: int, d: int, trials: int, seed: int) -> Dict[str, Any]:
    x_seed, transpose_seed, min_norm_seed = spawn_seeds(seed, 3)
    x = make_rng(x_seed).standard_normal(d)
    predicted = predicted_variance(x, k)
    mean, variance = reconstruction_moments(x, k, trials, transpose_seed, estimator="transpose")
    se = np.sqrt(variance / trials)
    relative = np.abs(variance - predicted) / predicted
    min_norm_mean, _ = reconstruction_moments(x, k, trials, min_norm_seed, estimator="min_norm")
    shrink = float(min_norm_mean @ x / (x @ x))
    return {
        "max_mean_error_in_se": float(np.max(np.abs(mean - x) / se)),
        "unbiased": bool(np.all(np.abs(mean - x) <= 5 * se)),
        "max_relative_variance_error": float(relative.max()),
        "variance_matches": bool(relative.max() <= 0.05),
        "min_norm_mean_shrinkage": shrink,
        "expected_shrinkage": k / d,
    }


def _laplace_checks(trials: int, seed: int, scale: float = 1.0) -> Dict[str, Any]:
    draws = laplace_noise(scale, (trials,), make_rng(seed))
    variance = float(draws.var(ddof=1))
    return {
        "mean": float(draws.mean()),
        "variance": variance,
        "expected_variance": 2 * scale**2,
        "variance_matches": abs(variance - 2 * scale**2) <= 0.05 * 2 * scale**2,
        "median": float(np.median(draws)),
        "tail_fraction": float(np.mean(np.abs(draws) > scale * np.log(2))),
    }


def verify_properties(
    trials: Optional[int] = None,
    preset: Union[str, Preset] = "full",
    seed: int = 0,
    k: int = 8,
    d: int = 32,
    reconstruction_k: int = 5,
    reconstruction_d: int = 10,
) -> ExperimentReport:
    """
    Monte Carlo checks of the projection and noise estimators.

    Dot products and squared distances of two unit vectors are unbiased with
    variance at most 2/k and 32/k; the transpose reconstruction is unbiased
    with per-element variance (||x||^2 + x_i^2)/k while the min-norm mean
    shrinks by k/d; Laplace noise has variance 2*scale^2.
    """
    preset = get_preset(preset) if isinstance(preset, str) else preset
    trials = trials or preset.trials
    dot_seed, rec_seed, lap_seed = spawn_seeds(seed, 3)
    report = new_report(
        "verify-properties",
        config={
            "trials": trials,
            "k": k,
            "d": d,
            "reconstruction_k": reconstruction_k,
            "reconstruction_d": reconstruction_d,
        },
        seeds={"base": seed},
    )
    report.summary = {
        "dot_distance": _dot_distance_moments(k, d, trials, dot_seed),
        "reconstruction": _reconstruction_checks(reconstruction_k, reconstruction_d, trials, rec_seed),
        "laplace": _laplace_checks(trials, lap_seed),
    }
    dot_distance, reconstruction, laplace = (
        report.summary[name] for name in ("dot_distance", "reconstruction", "laplace")
    )
    passed = (
        all(
            dot_distance[name]
            for name in ("dot_unbiased", "dot_variance_ok", "distance_unbiased", "distance_variance_ok")
        )
        and reconstruction["unbiased"]
        and reconstruction["variance_matches"]
        and laplace["variance_matches"]
    )
    report.summary["passed"] = bool(passed)
    log_experiment_event(logger, "verify-properties", "done", metrics={"passed": passed, "trials": trials})
    return report


def gen_data(
    out_dir: Union[str, Path],
    participants: int = 4,
    d: int = 2,
    mean_magnitude: float = TOY_MEAN_MAGNITUDE,
    samples_per_class: int = TOY_SAMPLES_PER_CLASS,
    seed: int = 0,
) -> ExperimentReport:
    """
    Toy two-class Gaussian data as CSV, each participant's GRP key (GRPM
    files) and scatter plots of the data before projection, per participant
    after projection, and as the coordinator's mixed view.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = synth_gaussian_two_class(d, mean_magnitude, samples_per_class, seed)
    train_set, test_set = split(data, TOY_TEST_FRACTION, seed)
    artifacts: List[Path] = []
    for name, ds in (("train", train_set), ("test", test_set)):
        frame = pd.DataFrame(ds.vectors, columns=[f"x{i}" for i in range(d)])
        frame["label"] = ds.labels
        path = out_dir / f"toy{d}d_{name}.csv"
        frame.to_csv(path, index=False, header=False)
        artifacts.append(path)

    schemes = make_schemes("grp", participants, train_set, spawn_seeds(seed, 1)[0])
    parts = shards(train_set, shard(train_set, participants, seed))
    projected = [obf.obfuscate_dataset(p, s)[0] for p, s in zip(parts, schemes)]
    keys_dir = out_dir / "keys"
    keys_dir.mkdir(exist_ok=True)
    for i, scheme in enumerate(schemes):
        path = keys_dir / f"participant{i}.grpm"
        save_key(scheme.key, path)
        artifacts.append(path)

    mixed = assemble([(p.vectors, p.labels) for p in projected], train_set.class_count, provenance="mixed")
    artifacts.append(
        save_scatter(
            [train_set] + projected + [mixed],
            ["original"] + [f"participant {i}" for i in range(participants)] + ["coordinator view"],
            out_dir / f"toy{d}d_scatter.png",
        )
    )
    report = new_report(
        "gen-data",
        config={
            "participants": participants,
            "d": d,
            "mean_magnitude": mean_magnitude,
            "samples_per_class": samples_per_class,
        },
        seeds={"base": seed},
    )
    report.artifacts = [str(p) for p in artifacts]
    logger.info("toy_data_generated", out_dir=str(out_dir), files=len(artifacts))
    return report


EXPERIMENTS: Dict[str, Callable[..., ExperimentReport]] = {
    "gen-data": gen_data,
    "exp-scaling": exp_scaling,
    "exp-compression": exp_compression,
    "exp-dp": exp_dp,
    "exp-condition": exp_condition,
    "exp-attack": exp_attack,
    "exp-overhead": exp_overhead,
    "verify-properties": verify_properties,
}


def run_experiment(name: str, **kwargs: Any) -> ExperimentReport:
    try:
        experiment = EXPERIMENTS[name]
    except KeyError:
        raise UnknownExperimentError(f"unknown experiment {name!r}; expected one of {sorted(EXPERIMENTS)}") from None
    return experiment(**kwargs)
