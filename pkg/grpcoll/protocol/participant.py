"""
Participant client.

Obfuscates the local shard with the participant's private scheme, streams it
to the coordinator (HELLO, DATASET_CHUNK x n, DATASET_END), waits for
TRAIN_ACK and, when given a test shard, classifies each obfuscated test vector
through the coordinator.
"""

import asyncio
import time
from typing import Optional

from grpcoll.core.config import parse_bind, settings
from grpcoll.core.errors import EmptyDatasetError, GrpCollError, ProtocolError, RemoteError, TransportError
from grpcoll.core.logging import get_logger, log_transfer
from grpcoll.protocol import wire
from grpcoll.schemas.dataset import Dataset
from grpcoll.schemas.obfuscation import Obfuscation
from grpcoll.schemas.protocol import MsgType, TransferReport, WireMessage
from grpcoll.services.obfuscation import obfuscate_dataset

logger = get_logger(__name__)

TRAIN_STREAM = 0
TEST_STREAM = 1


def _raise_if_error(msg: WireMessage) -> WireMessage:
    if msg.msg_type == MsgType.ERROR:
        code, detail = wire.parse_error(msg)
        raise RemoteError(code, detail)
    return msg


async def _pending_error(reader: asyncio.StreamReader) -> Optional[RemoteError]:
    """An ERROR frame the coordinator sent before dropping the connection, if any."""
    try:
        msg = await asyncio.wait_for(wire.read_message(reader), timeout=1.0)
    except (GrpCollError, asyncio.TimeoutError):
        return None
    if msg.msg_type == MsgType.ERROR:
        code, detail = wire.parse_error(msg)
        return RemoteError(code, detail)
    return None


async def run_participant(
    address: str,
    shard: Dataset,
    obfuscation: Obfuscation,
    test_shard: Optional[Dataset] = None,
    chunk_size: int = settings.CHUNK_SIZE,
    timeout_secs: float = settings.TIMEOUT_SECS,
) -> TransferReport:
    if shard.size == 0:
        raise EmptyDatasetError("refusing to send an empty shard")
    host, port = parse_bind(address)
    report = TransferReport()
    log = logger.bind(coordinator=f"{host}:{port}", scheme=obfuscation.kind)

    projected, report.obfuscation_time = obfuscate_dataset(shard, obfuscation, stream=TRAIN_STREAM)
    k = projected.dimension

    try:
        reader, writer = await asyncio.wait_for(asyncio.open_connection(host, port), timeout=timeout_secs)
    except (OSError, asyncio.TimeoutError) as exc:
        raise TransportError(f"cannot reach coordinator at {host}:{port}: {exc}") from exc

    try:
        started = time.perf_counter()
        try:
            report.bytes_sent += await wire.write_message(
                writer, wire.hello(k, projected.class_count, projected.size)
            )
            for msg in wire.iter_chunks(projected.vectors, projected.labels, chunk_size):
                report.bytes_sent += await wire.write_message(writer, msg)
                report.samples_sent += len(msg.payload) // (4 * k + 2)
            report.bytes_sent += await wire.write_message(writer, wire.dataset_end())
        except TransportError:
            remote = await _pending_error(reader)
            if remote is not None:
                raise remote
            raise
        report.transmission_time = time.perf_counter() - started
        log_transfer(
            log,
            role="participant",
            phase="upload",
            samples=report.samples_sent,
            bytes_count=report.bytes_sent,
            duration_ms=round(report.transmission_time * 1000, 2),
            obfuscation_ms=round(report.obfuscation_time * 1000, 2),
        )

        ack = _raise_if_error(await wire.read_message(reader))
        if ack.msg_type != MsgType.TRAIN_ACK:
            raise ProtocolError(f"expected TRAIN_ACK, got {ack.msg_type.name}")
        log.info("train_ack", trained_samples=wire.parse_train_ack(ack))

        if test_shard is not None and test_shard.size:
            await _test_phase(reader, writer, test_shard, obfuscation, report)
            log_transfer(
                log,
                role="participant",
                phase="test",
                samples=report.test_samples,
                bytes_count=report.test_bytes_sent,
                duration_ms=round(report.test_seconds * 1000, 2),
                correct=report.test_correct,
            )
    finally:
        writer.close()
        try:
            await writer.wait_closed()
        except (ConnectionError, OSError):
            pass
    return report


async def _test_phase(
    reader: asyncio.StreamReader,
    writer: asyncio.StreamWriter,
    test_shard: Dataset,
    obfuscation: Obfuscation,
    report: TransferReport,
) -> None:
    projected, report.test_obfuscation_time = obfuscate_dataset(test_shard, obfuscation, stream=TEST_STREAM)
    started = time.perf_counter()
    for x, label in zip(projected.vectors, projected.labels):
        report.test_bytes_sent += await wire.write_message(writer, wire.classify_request(x))
        resp = _raise_if_error(await wire.read_message(reader))
        if resp.msg_type != MsgType.CLASSIFY_RESP:
            raise ProtocolError(f"expected CLASSIFY_RESP, got {resp.msg_type.name}")
        predicted, _ = wire.parse_classify_response(resp)
        report.test_samples += 1
        report.test_correct += int(predicted == int(label))
    report.test_seconds = time.perf_counter() - started


def participate(
    address: str,
    shard: Dataset,
    obfuscation: Obfuscation,
    test_shard: Optional[Dataset] = None,
    chunk_size: int = settings.CHUNK_SIZE,
    timeout_secs: float = settings.TIMEOUT_SECS,
) -> TransferReport:
    return asyncio.run(run_participant(address, shard, obfuscation, test_shard, chunk_size, timeout_secs))


def accuracy_of(report: TransferReport) -> Optional[float]:
    return report.test_correct / report.test_samples if report.test_samples else None
