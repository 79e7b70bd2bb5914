"""
Command line entry point: ``python -m grpcoll <subcommand>``.

Experiment subcommands write ``<experiment>.json`` / ``.csv`` under --out.
``serve`` and ``participate`` run one side of a networked deployment; both
derive shards and keys from the same seeds the experiments use, so N
``participate`` processes against one ``serve`` reproduce a simulated run.
"""

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import List, Optional

import uvicorn

from grpcoll.core.config import parse_bind, settings
from grpcoll.core.errors import GrpCollError
from grpcoll.core.logging import configure_logging, get_logger, log_error
from grpcoll.core.seeding import spawn_seeds
from grpcoll.main import create_app
from grpcoll.protocol.coordinator import Coordinator, serve_coordinator
from grpcoll.protocol.participant import accuracy_of, participate
from grpcoll.schemas.nn import TrainConfig
from grpcoll.schemas.obfuscation import GrpObfuscation
from grpcoll.schemas.report import ExperimentReport, ExportFormat
from grpcoll.services import experiments
from grpcoll.services.datasets import shard, shards
from grpcoll.services.nn.network import MODEL_IDS
from grpcoll.services.projection import load_key
from grpcoll.services.report import write_report
from grpcoll.services.simulation import make_schemes

logger = get_logger(__name__)

EXIT_ERROR = 2


def _add_common(p: argparse.ArgumentParser, training: bool = True) -> None:
    preset = p.add_mutually_exclusive_group()
    preset.add_argument("--smoke", dest="preset", action="store_const", const="smoke", help="10%% of samples, N <= 20")
    preset.add_argument("--full", dest="preset", action="store_const", const="full", help="full datasets (default)")
    p.set_defaults(preset="full")
    p.add_argument("--out", type=Path, default=settings.REPORT_DIR, help="report directory")
    p.add_argument("--format", nargs="+", choices=[f.value for f in ExportFormat], default=["json", "csv"])
    p.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    if training:
        p.add_argument("--epochs", type=int, default=settings.EPOCHS)
        p.add_argument("--learning-rate", type=float, default=settings.LEARNING_RATE)
        p.add_argument("--batch-size", type=int, default=settings.BATCH_SIZE)
        p.add_argument("--weight-decay", type=float, default=0.0)
        p.add_argument("--parallel-runs", type=int, default=1, help="independent cells run concurrently")


def _add_dataset(p: argparse.ArgumentParser, default: str = "mnist") -> None:
    p.add_argument("--dataset", choices=experiments.DATASET_IDS, default=default)
    p.add_argument("--model", choices=MODEL_IDS, default=None, help="defaults to the dataset's model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grpcoll", description="Collaborative learning on projected data")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="toy data, keys and scatter plots")
    _add_common(p, training=False)
    p.add_argument("--participants", type=int, default=4)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--mean-magnitude", type=float, default=experiments.TOY_MEAN_MAGNITUDE)
    p.add_argument("--samples-per-class", type=int, default=experiments.TOY_SAMPLES_PER_CLASS)

    p = sub.add_parser("exp-scaling", help="accuracy vs number of participants")
    _add_common(p)
    _add_dataset(p)
    p.add_argument("--participants", type=int, nargs="+", default=[40, 100, 280, 400])
    p.add_argument("--scheme", choices=["grp", "dp", "none"], default="grp")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--key-sets", type=int, default=1)
    p.add_argument("--no-ncl", action="store_true", help="skip the non-collaborative runs")

    p = sub.add_parser("exp-compression", help="accuracy vs compression ratio")
    _add_common(p)
    _add_dataset(p)
    p.add_argument("--rho", type=float, nargs="+", default=[1.0, 2.33])
    p.add_argument("--participants", type=int, default=100)

    p = sub.add_parser("exp-dp", help="accuracy vs epsilon with Laplace noise")
    _add_common(p)
    _add_dataset(p)
    p.add_argument("--epsilon", type=float, nargs="+", default=[10, 50, 100, 200, 400, 500])
    p.add_argument("--participants", type=int, default=1)
    p.add_argument("--sensitivity", type=float, default=None)
    p.add_argument("--no-images", action="store_true")

    p = sub.add_parser("exp-condition", help="accuracy vs condition number of the key")
    _add_common(p)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--condition", type=float, nargs="+", default=[10, 30, 100, 300])
    p.add_argument("--model", choices=MODEL_IDS, default="toy_mlp")

    p = sub.add_parser("exp-attack", help="reconstruction variance with a leaked key")
    _add_common(p)
    _add_dataset(p)
    p.add_argument("--k", type=int, default=None, help="defaults to d - 1")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--probe-samples", type=int, default=1)
    p.add_argument("--train-comparison", action="store_true")

    p = sub.add_parser("exp-overhead", help="networked run with timing and byte accounting")
    _add_common(p)
    _add_dataset(p)
    p.add_argument("--participants", type=int, default=14)
    p.add_argument("--scheme", choices=["grp", "dp", "none"], default="grp")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--chunk-size", type=int, default=settings.CHUNK_SIZE)
    p.add_argument("--timeout-secs", type=float, default=settings.TIMEOUT_SECS)
    p.add_argument("--no-compare", action="store_true", help="skip the in-process comparison run")

    p = sub.add_parser("verify-properties", help="Monte Carlo estimator checks")
    _add_common(p, training=False)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--dim", type=int, default=32)

    p = sub.add_parser("serve", help="run a coordinator")
    _add_common(p)
    p.add_argument("--bind", default=settings.COORDINATOR_BIND)
    p.add_argument("--participants", type=int, required=True)
    p.add_argument("--model", choices=MODEL_IDS, default="cnn")
    p.add_argument("--timeout-secs", type=float, default=settings.TIMEOUT_SECS)
    p.add_argument("--http-bind", default=settings.HTTP_BIND, help="host:port for the ops API")
    p.add_argument("--serve-forever", action="store_true", help="keep answering after the last participant")

    p = sub.add_parser("participate", help="run one participant")
    _add_common(p, training=False)
    _add_dataset(p)
    p.add_argument("--connect", default=settings.COORDINATOR_BIND)
    p.add_argument("--participants", type=int, required=True, help="total participants, for sharding")
    p.add_argument("--index", type=int, required=True, help="this participant's shard index")
    p.add_argument("--scheme", choices=["grp", "dp", "none"], default="grp")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--key", type=Path, default=None, help="GRPM key file instead of the seeded key")
    p.add_argument("--with-test", action="store_true", help="classify the test shard after training")
    p.add_argument("--chunk-size", type=int, default=settings.CHUNK_SIZE)
    p.add_argument("--timeout-secs", type=float, default=settings.TIMEOUT_SECS)
    return parser


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )


def _run_experiment(args: argparse.Namespace) -> ExperimentReport:
    name = args.command
    if name == "gen-data":
        return experiments.gen_data(
            args.out, args.participants, args.dim, args.mean_magnitude, args.samples_per_class, args.seed
        )
    if name == "verify-properties":
        return experiments.verify_properties(args.trials, args.preset, args.seed, k=args.k, d=args.dim)

    common = dict(config=_train_config(args), preset=args.preset, seed=args.seed)
    if name == "exp-scaling":
        return experiments.exp_scaling(
            args.dataset,
            args.participants,
            scheme=args.scheme,
            model_id=args.model,
            key_sets=args.key_sets,
            include_ncl=not args.no_ncl,
            parallel_runs=args.parallel_runs,
            k=args.k,
            epsilon=args.epsilon,
            **common,
        )
    if name == "exp-compression":
        return experiments.exp_compression(
            args.dataset, args.rho, args.participants, args.model, parallel_runs=args.parallel_runs, **common
        )
    if name == "exp-dp":
        return experiments.exp_dp(
            args.dataset,
            args.epsilon,
            args.participants,
            args.model,
            sensitivity=args.sensitivity,
            out_dir=args.out,
            image_grid=False if args.no_images else None,
            parallel_runs=args.parallel_runs,
            **common,
        )
    if name == "exp-condition":
        return experiments.exp_condition(
            args.dim, args.condition, args.model, parallel_runs=args.parallel_runs, **common
        )
    if name == "exp-attack":
        return experiments.exp_attack(
            args.dataset,
            args.k,
            args.trials,
            args.preset,
            args.seed,
            probe_samples=args.probe_samples,
            train_comparison=args.train_comparison,
            config=common["config"],
            model_id=args.model,
        )
    if name == "exp-overhead":
        return experiments.exp_overhead(
            args.participants,
            args.dataset,
            args.scheme,
            args.model,
            chunk_size=args.chunk_size,
            timeout_secs=args.timeout_secs,
            compare_simulated=not args.no_compare,
            epsilon=args.epsilon,
            **common,
        )
    return experiments.run_experiment(name)


async def _serve(args: argparse.Namespace) -> ExperimentReport:
    config = _train_config(args)
    builder = experiments.model_builder(args.model, config.seed)
    coordinator = Coordinator(args.participants, builder, config, args.timeout_secs)
    http: Optional[uvicorn.Server] = None
    http_task: Optional[asyncio.Task] = None
    if args.http_bind:
        host, port = parse_bind(args.http_bind)
        http = uvicorn.Server(uvicorn.Config(create_app(coordinator), host=host, port=port, log_config=None))
        http_task = asyncio.create_task(http.serve())
    try:
        return await serve_coordinator(
            args.bind,
            args.participants,
            builder,
            config,
            args.timeout_secs,
            serve_forever=args.serve_forever,
            coordinator=coordinator,
        )
    finally:
        if http is not None:
            http.should_exit = True
            await http_task


def _participate(args: argparse.Namespace) -> dict:
    preset = experiments.get_preset(args.preset)
    train_set, test_set = experiments.load_experiment_data(args.dataset, preset, args.seed)
    if not 0 <= args.index < args.participants:
        raise GrpCollError(f"--index must lie in [0, {args.participants})")
    train_shard = shards(train_set, shard(train_set, args.participants, args.seed))[args.index]
    test_shard = shards(test_set, shard(test_set, args.participants, args.seed))[args.index]
    if args.key is not None:
        scheme = GrpObfuscation(key=load_key(args.key))
    else:
        key_seed = spawn_seeds(args.seed, 1)[0]
        schemes = make_schemes(
            args.scheme, args.participants, train_set, key_seed, k=args.k, epsilon=args.epsilon or 100.0
        )
        scheme = schemes[args.index]
    transfer = participate(
        args.connect,
        train_shard,
        scheme,
        test_shard if args.with_test else None,
        chunk_size=args.chunk_size,
        timeout_secs=args.timeout_secs,
    )
    return {**transfer.model_dump(), "test_accuracy": accuracy_of(transfer)}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(level=args.log_level)
    try:
        if args.command == "participate":
            print(json.dumps(_participate(args), indent=2))
            return 0
        if args.command == "serve":
            report = asyncio.run(_serve(args))
        else:
            report = _run_experiment(args)
        written = write_report(report, args.out, [ExportFormat(f) for f in args.format])
        print(json.dumps({"experiment_id": report.experiment_id, "files": [str(p) for p in written]}))
        return 0
    except GrpCollError as exc:
        log_error(logger, exc, command=args.command)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
