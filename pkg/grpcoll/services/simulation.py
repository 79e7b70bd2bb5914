"""
Shard -> obfuscate -> aggregate -> train -> test, in-process or over sockets.

``simulate`` and ``run_networked`` run the same pipeline: both round
obfuscated vectors to the wire's float32, both assemble the training set in
content order, and both obfuscate test shards with the participant's own
scheme. With equal seeds they produce the same trained parameters.
"""

import asyncio
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from grpcoll.core.config import settings
from grpcoll.core.errors import InvalidDimensionError
from grpcoll.core.logging import get_logger, log_experiment_event
from grpcoll.core.seeding import spawn_seeds
from grpcoll.protocol.coordinator import Coordinator
from grpcoll.protocol.participant import run_participant
from grpcoll.protocol.wire import session_bytes
from grpcoll.schemas.dataset import Dataset
from grpcoll.schemas.nn import TrainConfig
from grpcoll.schemas.obfuscation import NoObfuscation, Obfuscation
from grpcoll.schemas.report import ExperimentReport, Mode, ParticipantMetrics, RunMetrics
from grpcoll.services import obfuscation as obf
from grpcoll.services.assembly import assemble, wire_round
from grpcoll.services.datasets import shard, shards
from grpcoll.services.nn.network import NetworkModel
from grpcoll.services.nn.training import predict_rows, train
from grpcoll.services.report import new_report, round_accuracy

logger = get_logger(__name__)

ModelBuilder = Callable[[int, int], NetworkModel]
SchemeKind = Literal["grp", "dp", "none"]


def make_schemes(
    kind: SchemeKind,
    participants: int,
    train_set: Dataset,
    seed: int,
    k: Optional[int] = None,
    epsilon: Optional[float] = None,
    noise_scale: Optional[float] = None,
) -> List[Obfuscation]:
    """
    One scheme per participant, each from its own spawned seed.

    GRP keys are independent draws, so no two participants share a matrix.
    DP takes either ``epsilon`` (sensitivity from ``train_set``'s bounds) or a
    fixed Laplace ``noise_scale``.
    """
    seeds = spawn_seeds(seed, participants)
    d = train_set.dimension
    if kind == "grp":
        return [obf.grp(k or d, d, s) for s in seeds]
    if kind == "dp":
        if noise_scale is not None:
            return [obf.dp_with_scale(noise_scale, s) for s in seeds]
        if epsilon is None:
            raise ValueError("dp needs epsilon or noise_scale")
        return [obf.dp(train_set, epsilon, s) for s in seeds]
    if kind == "none":
        return [NoObfuscation() for _ in seeds]
    raise ValueError(f"unknown scheme {kind!r}")


def _scheme_fields(schemes: Sequence[Obfuscation], d: int) -> dict:
    first = schemes[0]
    k = obf.output_dimension(first, d)
    fields = {"scheme": first.kind, "k": k, "rho": d / k}
    if first.kind == "dp":
        fields["epsilon"] = first.budget.epsilon
        fields["noise_scale"] = first.budget.scale
    return fields


class _Participant:
    def __init__(self, index: int, train_shard: Dataset, test_shard: Dataset, scheme: Obfuscation):
        self.index = index
        self.train, self.obfuscation_seconds = obf.obfuscate_dataset(train_shard, scheme, stream=0)
        self.test, self.test_obfuscation_seconds = obf.obfuscate_dataset(test_shard, scheme, stream=1)
        self.train_vectors = wire_round(self.train.vectors)
        self.test_vectors = wire_round(self.test.vectors)


def _prepare(
    train_set: Dataset, test_set: Dataset, schemes: Sequence[Obfuscation], shard_seed: int
) -> List[_Participant]:
    n = len(schemes)
    train_shards = shards(train_set, shard(train_set, n, shard_seed))
    test_shards = shards(test_set, shard(test_set, n, shard_seed))
    return [
        _Participant(i, train_shards[i], test_shards[i], schemes[i]) for i in range(n)
    ]


def _correct(model: NetworkModel, p: _Participant) -> int:
    if p.test.size == 0:
        return 0
    return int(np.sum(predict_rows(model, p.test_vectors) == p.test.labels))


def train_collaborative(
    participants: Sequence[_Participant], class_count: int, model_builder: ModelBuilder, config: TrainConfig
) -> Tuple[NetworkModel, float]:
    ds = assemble(
        [(p.train_vectors, p.train.labels) for p in participants], class_count, provenance="simulated"
    )
    model = model_builder(ds.dimension, class_count)
    model, history = train(model, ds, config)
    return model, history.train_seconds


def simulate(
    train_set: Dataset,
    test_set: Dataset,
    schemes: Sequence[Obfuscation],
    model_builder: ModelBuilder,
    config: TrainConfig,
    mode: Mode = Mode.COLLABORATIVE,
    shard_seed: int = 0,
    label: Optional[str] = None,
    chunk_size: int = settings.CHUNK_SIZE,
) -> ExperimentReport:
    """
    In-process run with N = len(schemes) participants.

    Collaborative trains one model on the union of the obfuscated shards;
    non-collaborative trains one model per participant on its own shard and
    tests it on that participant's test shard, reporting min/mean/max.
    """
    run, _ = simulate_run(
        train_set, test_set, schemes, model_builder, config, mode, shard_seed, label, chunk_size
    )
    report = new_report(
        "simulate",
        config={"train": config.model_dump(), "mode": mode.value, "chunk_size": chunk_size},
        seeds={"train": config.seed, "shard": shard_seed},
    )
    report.runs.append(run)
    return report


def simulate_run(
    train_set: Dataset,
    test_set: Dataset,
    schemes: Sequence[Obfuscation],
    model_builder: ModelBuilder,
    config: TrainConfig,
    mode: Mode = Mode.COLLABORATIVE,
    shard_seed: int = 0,
    label: Optional[str] = None,
    chunk_size: int = settings.CHUNK_SIZE,
) -> Tuple[RunMetrics, List[NetworkModel]]:
    if not schemes:
        raise InvalidDimensionError("need at least one participant")
    if train_set.dimension != test_set.dimension:
        raise InvalidDimensionError("train and test sets differ in dimension")
    d = train_set.dimension
    participants = _prepare(train_set, test_set, schemes, shard_seed)
    class_count = train_set.class_count
    k = participants[0].train.dimension
    per_participant = [
        ParticipantMetrics(
            participant=p.index,
            train_samples=p.train.size,
            test_samples=p.test.size,
            obfuscation_seconds=p.obfuscation_seconds,
            bytes_sent=session_bytes(p.train.size, k, chunk_size),
        )
        for p in participants
    ]

    models: List[NetworkModel] = []
    if mode == Mode.NON_COLLABORATIVE:
        train_seconds = 0.0
        for p, metrics in zip(participants, per_participant):
            model, seconds = train_collaborative([p], class_count, model_builder, config)
            train_seconds += seconds
            metrics.accuracy = round_accuracy(_correct(model, p) / p.test.size) if p.test.size else None
            models.append(model)
        accuracies = [m.accuracy for m in per_participant if m.accuracy is not None]
        accuracy = round_accuracy(float(np.mean(accuracies))) if accuracies else None
        acc_min = round_accuracy(min(accuracies)) if accuracies else None
        acc_max = round_accuracy(max(accuracies)) if accuracies else None
    else:
        model, train_seconds = train_collaborative(participants, class_count, model_builder, config)
        models.append(model)
        correct = 0
        for p, metrics in zip(participants, per_participant):
            c = _correct(model, p)
            correct += c
            metrics.accuracy = round_accuracy(c / p.test.size) if p.test.size else None
        accuracy = round_accuracy(correct / test_set.size)
        acc_min = acc_max = None

    run = RunMetrics(
        label=label or f"{mode.value}-n{len(schemes)}",
        dataset=train_set.provenance,
        mode=mode,
        participants=len(schemes),
        seed=config.seed,
        accuracy=accuracy,
        accuracy_min=acc_min,
        accuracy_max=acc_max,
        train_seconds=train_seconds,
        obfuscation_seconds=float(np.mean([p.obfuscation_seconds for p in participants])),
        bytes_transferred=sum(m.bytes_sent for m in per_participant),
        per_participant=per_participant,
        **_scheme_fields(schemes, d),
    )
    log_experiment_event(
        logger,
        "simulate",
        "run_done",
        metrics={"accuracy": accuracy, "train_seconds": round(train_seconds, 3)},
        label=run.label,
    )
    return run, models


async def run_networked_async(
    train_set: Dataset,
    test_set: Dataset,
    schemes: Sequence[Obfuscation],
    model_builder: ModelBuilder,
    config: TrainConfig,
    shard_seed: int = 0,
    label: Optional[str] = None,
    chunk_size: int = settings.CHUNK_SIZE,
    timeout_secs: float = settings.TIMEOUT_SECS,
    host: str = "127.0.0.1",
) -> Tuple[RunMetrics, Coordinator]:
    n = len(schemes)
    train_shards = shards(train_set, shard(train_set, n, shard_seed))
    test_shards = shards(test_set, shard(test_set, n, shard_seed))

    coordinator = Coordinator(n, model_builder, config, timeout_secs)
    bound_host, port = await coordinator.start(host, 0)
    address = f"{bound_host}:{port}"
    try:
        transfers = await asyncio.gather(
            *(
                run_participant(address, train_shards[i], schemes[i], test_shards[i], chunk_size, timeout_secs)
                for i in range(n)
            )
        )
    except BaseException:
        await coordinator.stop()
        raise
    served = await coordinator.wait_finished()

    correct = sum(t.test_correct for t in transfers)
    tested = sum(t.test_samples for t in transfers)
    per_participant = [
        ParticipantMetrics(
            participant=i,
            train_samples=t.samples_sent,
            test_samples=t.test_samples,
            accuracy=round_accuracy(t.test_correct / t.test_samples) if t.test_samples else None,
            obfuscation_seconds=t.obfuscation_time,
            bytes_sent=t.bytes_sent,
        )
        for i, t in enumerate(transfers)
    ]
    coordinator_run = served.runs[0]
    run = RunMetrics(
        label=label or f"networked-n{n}",
        dataset=train_set.provenance,
        mode=Mode.COLLABORATIVE,
        participants=n,
        seed=config.seed,
        accuracy=round_accuracy(correct / tested) if tested else None,
        train_seconds=coordinator_run.train_seconds,
        test_seconds=coordinator_run.test_seconds,
        obfuscation_seconds=float(np.mean([t.obfuscation_time for t in transfers])),
        bytes_transferred=sum(t.bytes_sent for t in transfers),
        extra={
            "coordinator_bytes_received": float(coordinator_run.bytes_transferred),
            "test_bytes_sent": float(sum(t.test_bytes_sent for t in transfers)),
            "test_obfuscation_seconds": float(np.mean([t.test_obfuscation_time for t in transfers])),
            "transmission_seconds": float(np.mean([t.transmission_time for t in transfers])),
        },
        per_participant=per_participant,
        **_scheme_fields(schemes, train_set.dimension),
    )
    return run, coordinator


def run_networked(
    train_set: Dataset,
    test_set: Dataset,
    schemes: Sequence[Obfuscation],
    model_builder: ModelBuilder,
    config: TrainConfig,
    shard_seed: int = 0,
    label: Optional[str] = None,
    chunk_size: int = settings.CHUNK_SIZE,
    timeout_secs: float = settings.TIMEOUT_SECS,
) -> ExperimentReport:
    """Coordinator plus N participants over 127.0.0.1 sockets in one event loop."""
    run, _ = asyncio.run(
        run_networked_async(
            train_set, test_set, schemes, model_builder, config, shard_seed, label, chunk_size, timeout_secs
        )
    )
    report = new_report(
        "networked",
        config={"train": config.model_dump(), "chunk_size": chunk_size, "timeout_secs": timeout_secs},
        seeds={"train": config.seed, "shard": shard_seed},
    )
    report.runs.append(run)
    return report
