"""
Coordinator service.

Accepts participant connections, collects their obfuscated shards, trains
one model on the union once every expected participant has sent
DATASET_END, then answers CLASSIFY_REQ frames against the trained model.

This module only sees vectors and labels. It must not import anything that
can construct or hold a projection key; tests/test_architecture.py checks
its transitive imports.
"""

import asyncio
import threading
import time
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from grpcoll.core.config import parse_bind, settings
from grpcoll.core.errors import (
    DimensionMismatchError,
    DuplicateEndError,
    FramingError,
    GrpCollError,
    NotReadyError,
    PartialDataError,
    ProtocolError,
    TrainingFailedError,
    TransportError,
)
from grpcoll.core.logging import get_logger, log_error, log_transfer
from grpcoll.protocol import wire
from grpcoll.schemas.nn import TrainConfig, TrainHistory
from grpcoll.schemas.protocol import MsgType, SessionState, SessionStatus, WireMessage
from grpcoll.schemas.report import ExperimentReport, Mode, RunMetrics
from grpcoll.services.assembly import assemble
from grpcoll.services.nn.network import NetworkModel
from grpcoll.services.nn.training import classify_one, train

logger = get_logger(__name__)

ModelBuilder = Callable[[int, int], NetworkModel]

# errors after which a session stays open
RECOVERABLE = (NotReadyError, DimensionMismatchError)


class Coordinator:
    def __init__(
        self,
        expected_participants: int,
        model_builder: ModelBuilder,
        train_config: TrainConfig,
        timeout_secs: float = settings.TIMEOUT_SECS,
    ):
        if expected_participants < 1:
            raise ValueError("expected_participants must be at least 1")
        self.expected_participants = expected_participants
        self.model_builder = model_builder
        self.train_config = train_config
        self.timeout_secs = timeout_secs

        self.sessions: Dict[int, SessionState] = {}
        self.model: Optional[NetworkModel] = None
        self.history: Optional[TrainHistory] = None
        self.dimension: Optional[int] = None
        self.class_count: Optional[int] = None
        self.trained_samples = 0
        self.classify_seconds = 0.0
        self.failure: Optional[GrpCollError] = None
        self.address: Optional[Tuple[str, int]] = None

        self._parts: List[Tuple[np.ndarray, np.ndarray]] = []
        self._ends = 0
        self._next_session = 0
        self._open = 0
        self._last_activity = time.monotonic()
        self._model_lock = threading.Lock()
        self._trained = asyncio.Event()
        self._finished = asyncio.Event()
        self._server: Optional[asyncio.AbstractServer] = None
        self._watchdog: Optional[asyncio.Task] = None

    @property
    def ready(self) -> bool:
        return self.model is not None

    @property
    def training(self) -> bool:
        return self._ends == self.expected_participants and not self._trained.is_set()

    # lifecycle

    async def start(self, host: str, port: int) -> Tuple[str, int]:
        self._server = await asyncio.start_server(self.handle, host, port)
        self.address = self._server.sockets[0].getsockname()[:2]
        self._watchdog = asyncio.create_task(self._watch())
        logger.info(
            "coordinator_listening",
            host=self.address[0],
            port=self.address[1],
            expected_participants=self.expected_participants,
        )
        return self.address

    async def wait_finished(self, serve_forever: bool = False) -> ExperimentReport:
        try:
            if serve_forever:
                await self._server.serve_forever()
            else:
                await self._finished.wait()
        finally:
            await self.stop()
        if self.failure is not None:
            raise self.failure
        return self.report()

    async def stop(self) -> None:
        if self._watchdog is not None:
            self._watchdog.cancel()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    def _abort(self, error: GrpCollError, phase: str = "collect") -> None:
        if self.failure is None:
            self.failure = error
            log_error(logger, error, phase=phase)
        self._trained.set()
        self._finished.set()

    async def _watch(self) -> None:
        interval = min(1.0, self.timeout_secs / 4)
        while not self._trained.is_set():
            await asyncio.sleep(interval)
            idle = time.monotonic() - self._last_activity
            if self._ends < self.expected_participants and idle > self.timeout_secs:
                self._abort(
                    PartialDataError(
                        f"{self._ends}/{self.expected_participants} participants finished, "
                        f"idle for {idle:.1f}s"
                    )
                )

    # sessions

    async def handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        self._next_session += 1
        self._open += 1
        session = SessionState(session_id=self._next_session)
        self.sessions[session.session_id] = session
        log = logger.bind(session=session.session_id)
        log.info("session_opened")
        vectors: List[np.ndarray] = []
        labels: List[np.ndarray] = []
        started = time.perf_counter()
        try:
            while True:
                try:
                    msg = await self._read(reader, session)
                except TransportError:
                    break
                try:
                    reply = await self._dispatch(msg, session, vectors, labels, started, log)
                except RECOVERABLE as exc:
                    log_error(log, exc)
                    await wire.write_message(writer, wire.error(exc.code, exc.detail))
                    continue
                if reply is not None:
                    await wire.write_message(writer, reply)
                if self.failure is not None:
                    raise self.failure
        except asyncio.TimeoutError:
            session.status = SessionStatus.FAILED
            error = PartialDataError(f"session {session.session_id} timed out after {self.timeout_secs}s")
            await self._send_error(writer, error)
            self._abort(error)
        except GrpCollError as exc:
            session.status = SessionStatus.FAILED
            await self._send_error(writer, exc)
            if self._ends < self.expected_participants and not isinstance(exc, PartialDataError):
                log_error(log, exc)
        finally:
            if session.status != SessionStatus.FAILED:
                session.status = SessionStatus.CLOSED
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass
            self._open -= 1
            log.info("session_closed", status=session.status.value)
            if self._open == 0 and self._trained.is_set():
                self._finished.set()

    async def _read(self, reader: asyncio.StreamReader, session: SessionState) -> WireMessage:
        # once trained, idle classification sessions are not timed out
        timeout = None if self._trained.is_set() else self.timeout_secs
        msg = await asyncio.wait_for(wire.read_message(reader), timeout=timeout)
        self._last_activity = time.monotonic()
        if msg.msg_type == MsgType.CLASSIFY_REQ:
            session.classify_bytes += msg.frame_size
        else:
            session.bytes_received += msg.frame_size
        return msg

    async def _send_error(self, writer: asyncio.StreamWriter, exc: GrpCollError) -> None:
        try:
            await wire.write_message(writer, wire.error(exc.code, exc.detail))
        except TransportError:
            pass

    async def _dispatch(
        self,
        msg: WireMessage,
        session: SessionState,
        vectors: List[np.ndarray],
        labels: List[np.ndarray],
        started: float,
        log,
    ) -> Optional[WireMessage]:
        if msg.msg_type == MsgType.HELLO:
            if session.status != SessionStatus.CONNECTED:
                raise ProtocolError("HELLO sent twice on one session")
            k, class_count, sample_count = wire.parse_hello(msg)
            if k == 0 or class_count == 0:
                raise ProtocolError("HELLO declares zero dimension or zero classes")
            if self._trained.is_set() or self._ends == self.expected_participants:
                raise ProtocolError("all participants have already delivered their data")
            if self.dimension is not None and (k, class_count) != (self.dimension, self.class_count):
                raise ProtocolError(
                    f"HELLO declares k={k}, {class_count} classes; session set is "
                    f"k={self.dimension}, {self.class_count} classes"
                )
            self.dimension, self.class_count = k, class_count
            session.expected_dimension = k
            session.class_count = class_count
            session.declared_samples = sample_count
            session.status = SessionStatus.RECEIVING
            return None

        if msg.msg_type == MsgType.DATASET_CHUNK:
            if session.status != SessionStatus.RECEIVING:
                raise ProtocolError("DATASET_CHUNK before HELLO")
            try:
                x, y = wire.parse_chunk(msg, session.expected_dimension)
            except FramingError as exc:
                raise ProtocolError(f"chunk does not match the declared k: {exc.detail}") from exc
            if y.size and y.max() >= session.class_count:
                raise ProtocolError(f"label {int(y.max())} outside the declared {session.class_count} classes")
            vectors.append(x)
            labels.append(y)
            session.received_samples += x.shape[0]
            return None

        if msg.msg_type == MsgType.DATASET_END:
            if session.status == SessionStatus.COMPLETE:
                raise DuplicateEndError("DATASET_END sent twice on one session")
            if session.status != SessionStatus.RECEIVING:
                raise ProtocolError("DATASET_END before HELLO")
            if session.received_samples != session.declared_samples:
                raise ProtocolError(
                    f"HELLO declared {session.declared_samples} samples, received {session.received_samples}"
                )
            session.status = SessionStatus.COMPLETE
            if vectors:
                self._parts.append((np.concatenate(vectors), np.concatenate(labels)))
            vectors.clear()
            labels.clear()
            self._ends += 1
            log_transfer(
                log,
                role="coordinator",
                phase="collect",
                samples=session.received_samples,
                bytes_count=session.bytes_received,
                duration_ms=round((time.perf_counter() - started) * 1000, 2),
            )
            if self._ends == self.expected_participants:
                asyncio.create_task(self._train())
            await self._trained.wait()
            if self.failure is not None:
                raise self.failure
            return wire.train_ack(self.trained_samples)

        if msg.msg_type == MsgType.CLASSIFY_REQ:
            if not self._trained.is_set():
                raise NotReadyError("model is not trained yet")
            session.classify_requests += 1
            x = wire.parse_classify_request(msg)
            label, probabilities = self.classify(x)
            return wire.classify_response(label, probabilities)

        raise ProtocolError(f"{msg.msg_type.name} is not accepted by the coordinator")

    # training and classification

    async def _train(self) -> None:
        try:
            await asyncio.to_thread(self._train_sync)
        except GrpCollError as exc:
            self._abort(exc, phase="train")
            return
        except Exception as exc:
            log_error(logger, exc, phase="train", exc_info=True)
            self._abort(TrainingFailedError(f"{type(exc).__name__}: {exc}"), phase="train")
            return
        self._trained.set()
        if self._open == 0:
            self._finished.set()

    def _train_sync(self) -> None:
        ds = assemble(self._parts, self.class_count, provenance="coordinator")
        # the per-session grouping is gone after assembly
        self._parts = []
        model = self.model_builder(ds.dimension, self.class_count)
        model, history = train(model, ds, self.train_config)
        self.trained_samples = ds.size
        self.history = history
        with self._model_lock:
            self.model = model

    def classify(self, x: np.ndarray) -> Tuple[int, np.ndarray]:
        if self.model is None:
            raise NotReadyError("model is not trained yet")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dimension,):
            raise DimensionMismatchError(f"expected {self.dimension} values, got {x.shape[0] if x.ndim else 0}")
        started = time.perf_counter()
        with self._model_lock:
            label, probabilities = classify_one(self.model, x)
        self.classify_seconds += time.perf_counter() - started
        return label, probabilities

    # reporting

    def status(self) -> dict:
        return {
            "expected_participants": self.expected_participants,
            "completed_participants": self._ends,
            "received_samples": sum(s.received_samples for s in self.sessions.values()),
            "dimension": self.dimension,
            "class_count": self.class_count,
            "training": self.training,
            "ready": self.ready,
            "failure": None if self.failure is None else str(self.failure),
            "sessions": [s.model_dump(mode="json") for s in self.sessions.values()],
        }

    def report(self) -> ExperimentReport:
        received = sum(s.bytes_received for s in self.sessions.values())
        run = RunMetrics(
            label="coordinator",
            dataset="received",
            scheme="unknown",
            mode=Mode.COLLABORATIVE,
            participants=self.expected_participants,
            k=self.dimension,
            seed=self.train_config.seed,
            train_seconds=self.history.train_seconds if self.history else 0.0,
            test_seconds=self.classify_seconds,
            bytes_transferred=received,
            extra={
                "trained_samples": float(self.trained_samples),
                "classify_requests": float(sum(s.classify_requests for s in self.sessions.values())),
            },
        )
        return ExperimentReport(
            experiment_id="serve",
            config={"train": self.train_config.model_dump(), "timeout_secs": self.timeout_secs},
            seeds={"train": self.train_config.seed},
            runs=[run],
        )


async def serve_coordinator(
    bind_address: str,
    expected_participants: int,
    model_builder: ModelBuilder,
    train_config: TrainConfig,
    timeout_secs: float = settings.TIMEOUT_SECS,
    serve_forever: bool = False,
    coordinator: Optional[Coordinator] = None,
) -> ExperimentReport:
    """Run a coordinator until every participant has disconnected after training."""
    host, port = parse_bind(bind_address)
    coordinator = coordinator or Coordinator(expected_participants, model_builder, train_config, timeout_secs)
    await coordinator.start(host, port)
    return await coordinator.wait_finished(serve_forever=serve_forever)
