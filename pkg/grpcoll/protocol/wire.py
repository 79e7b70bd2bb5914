"""
GRPC framing.

Every frame is a 12-byte header (magic "GRPC", version u16, type u16,
payload length u32; little-endian) followed by the payload. Vector payloads
are float32 little-endian.
"""

import asyncio
import struct
from typing import Iterator, Tuple

import numpy as np

from grpcoll.core.errors import FramingError, TransportError
from grpcoll.schemas.protocol import HEADER_SIZE, MAGIC, MsgType, WireMessage

WIRE_VERSION = 1
MAX_PAYLOAD = 64 * 1024 * 1024

HEADER = struct.Struct("<4sHHI")
HELLO = struct.Struct("<IHHI")
ACK = struct.Struct("<I")
RESP_HEADER = struct.Struct("<HH")
ERROR_HEADER = struct.Struct("<H")


def encode(msg: WireMessage) -> bytes:
    if len(msg.payload) > MAX_PAYLOAD:
        raise FramingError(f"payload of {len(msg.payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(msg.magic, msg.version, int(msg.msg_type), len(msg.payload)) + msg.payload


def decode_header(header: bytes) -> Tuple[MsgType, int, int]:
    """(type, version, payload length) of a 12-byte header."""
    if len(header) < HEADER_SIZE:
        raise FramingError(f"header needs {HEADER_SIZE} bytes, got {len(header)}")
    magic, version, msg_type, length = HEADER.unpack_from(header)
    if magic != MAGIC:
        raise FramingError(f"bad magic {magic!r}")
    if version != WIRE_VERSION:
        raise FramingError(f"unsupported wire version {version}")
    if length > MAX_PAYLOAD:
        raise FramingError(f"declared payload of {length} bytes is too large")
    try:
        kind = MsgType(msg_type)
    except ValueError as exc:
        raise FramingError(f"unknown message type {msg_type}") from exc
    return kind, version, length


def decode(frame: bytes) -> WireMessage:
    kind, version, length = decode_header(frame)
    if len(frame) != HEADER_SIZE + length:
        raise FramingError(f"header declares {length} payload bytes, frame carries {len(frame) - HEADER_SIZE}")
    return WireMessage(msg_type=kind, payload=bytes(frame[HEADER_SIZE:]), version=version)


async def read_message(reader: asyncio.StreamReader) -> WireMessage:
    try:
        header = await reader.readexactly(HEADER_SIZE)
        kind, version, length = decode_header(header)
        payload = await reader.readexactly(length) if length else b""
    except asyncio.IncompleteReadError as exc:
        raise TransportError(f"connection closed after {len(exc.partial)} bytes of a frame") from exc
    except (ConnectionError, OSError) as exc:
        raise TransportError(str(exc)) from exc
    return WireMessage(msg_type=kind, payload=payload, version=version)


async def write_message(writer: asyncio.StreamWriter, msg: WireMessage) -> int:
    frame = encode(msg)
    try:
        writer.write(frame)
        await writer.drain()
    except (ConnectionError, OSError) as exc:
        raise TransportError(str(exc)) from exc
    return len(frame)


# payload codecs

def hello(k: int, class_count: int, sample_count: int) -> WireMessage:
    return WireMessage(msg_type=MsgType.HELLO, payload=HELLO.pack(k, class_count, 0, sample_count))


def parse_hello(msg: WireMessage) -> Tuple[int, int, int]:
    if len(msg.payload) != HELLO.size:
        raise FramingError(f"HELLO payload must be {HELLO.size} bytes, got {len(msg.payload)}")
    k, class_count, _reserved, sample_count = HELLO.unpack(msg.payload)
    return k, class_count, sample_count


def sample_dtype(k: int) -> np.dtype:
    """One chunk record: k float32 values then a u16 label, packed."""
    return np.dtype([("x", "<f4", (k,)), ("y", "<u2")])


def chunk(vectors: np.ndarray, labels: np.ndarray) -> WireMessage:
    vectors = np.asarray(vectors)
    records = np.empty(vectors.shape[0], dtype=sample_dtype(vectors.shape[1]))
    records["x"] = vectors
    records["y"] = labels
    return WireMessage(msg_type=MsgType.DATASET_CHUNK, payload=records.tobytes())


def parse_chunk(msg: WireMessage, k: int) -> Tuple[np.ndarray, np.ndarray]:
    dtype = sample_dtype(k)
    if len(msg.payload) % dtype.itemsize:
        raise FramingError(f"chunk of {len(msg.payload)} bytes is not a whole number of {dtype.itemsize}-byte samples")
    records = np.frombuffer(msg.payload, dtype=dtype)
    return records["x"].astype(np.float64), records["y"].astype(np.int64)


def iter_chunks(vectors: np.ndarray, labels: np.ndarray, chunk_size: int) -> Iterator[WireMessage]:
    for start in range(0, vectors.shape[0], chunk_size):
        yield chunk(vectors[start : start + chunk_size], labels[start : start + chunk_size])


def dataset_end() -> WireMessage:
    return WireMessage(msg_type=MsgType.DATASET_END)


def train_ack(count: int) -> WireMessage:
    return WireMessage(msg_type=MsgType.TRAIN_ACK, payload=ACK.pack(count))


def parse_train_ack(msg: WireMessage) -> int:
    if len(msg.payload) != ACK.size:
        raise FramingError("TRAIN_ACK payload must be 4 bytes")
    return ACK.unpack(msg.payload)[0]


def classify_request(x: np.ndarray) -> WireMessage:
    return WireMessage(msg_type=MsgType.CLASSIFY_REQ, payload=np.asarray(x, dtype="<f4").tobytes())


def parse_classify_request(msg: WireMessage) -> np.ndarray:
    if len(msg.payload) % 4:
        raise FramingError("CLASSIFY_REQ payload is not a whole number of float32 values")
    return np.frombuffer(msg.payload, dtype="<f4").astype(np.float64)


def classify_response(label: int, probabilities: np.ndarray) -> WireMessage:
    probabilities = np.asarray(probabilities, dtype="<f4")
    payload = RESP_HEADER.pack(label, probabilities.size) + probabilities.tobytes()
    return WireMessage(msg_type=MsgType.CLASSIFY_RESP, payload=payload)


def parse_classify_response(msg: WireMessage) -> Tuple[int, np.ndarray]:
    if len(msg.payload) < RESP_HEADER.size:
        raise FramingError("CLASSIFY_RESP payload too short")
    label, count = RESP_HEADER.unpack_from(msg.payload)
    if len(msg.payload) != RESP_HEADER.size + 4 * count:
        raise FramingError(f"CLASSIFY_RESP declares {count} classes, carries {len(msg.payload) - RESP_HEADER.size} bytes")
    return label, np.frombuffer(msg.payload, dtype="<f4", offset=RESP_HEADER.size).astype(np.float64)


def error(code: int, detail: str) -> WireMessage:
    return WireMessage(msg_type=MsgType.ERROR, payload=ERROR_HEADER.pack(code) + detail.encode("utf-8"))


def parse_error(msg: WireMessage) -> Tuple[int, str]:
    if len(msg.payload) < ERROR_HEADER.size:
        raise FramingError("ERROR payload too short")
    (code,) = ERROR_HEADER.unpack_from(msg.payload)
    return code, msg.payload[ERROR_HEADER.size :].decode("utf-8", errors="replace")


def session_bytes(samples: int, k: int, chunk_size: int) -> int:
    """Exact frame bytes of HELLO + chunks + END for one shard."""
    chunks = -(-samples // chunk_size)
    return (HEADER_SIZE + HELLO.size) + samples * (4 * k + 2) + chunks * HEADER_SIZE + HEADER_SIZE
