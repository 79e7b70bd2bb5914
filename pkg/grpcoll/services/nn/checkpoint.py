"""
GRPN model checkpoints.

Layout, all little-endian::

    header   magic "GRPN" | version u16 | layer count u16 | input_dim u32
             | class_count u16 | input rank u16 | rank x u32 dims
             | name length u16 | utf-8 name
    layer    kind tag u8 | 3 pad | in_features u32 | out_features u32
             | in_channels u32 | out_channels u32 | kernel u32 | pool u32
             | rate f64 | param count u16
    param    name length u8 | ascii name | ndim u8 | ndim x u32 shape
             | float64 values, row-major
"""

import struct
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from grpcoll.core.errors import BadMagicError, CheckpointError, TruncatedFileError, UnsupportedVersionError
from grpcoll.core.seeding import make_rng
from grpcoll.schemas.nn import LayerKind, LayerSpec
from grpcoll.services.nn.layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2D,
    ReLU,
    Softmax,
)
from grpcoll.services.nn.network import NetworkModel

MODEL_MAGIC = b"GRPN"
MODEL_VERSION = 1
HEADER = struct.Struct("<4sHHIHH")
LAYER = struct.Struct("<B3xIIIIIIdH")
KIND_TAGS = {kind: i for i, kind in enumerate(LayerKind)}


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.blob):
            raise TruncatedFileError(f"checkpoint ends at byte {len(self.blob)}, needed {self.pos + size}")
        chunk = self.blob[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: Union[str, struct.Struct]) -> Tuple:
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def encode_model(model: NetworkModel) -> bytes:
    name = model.name.encode("utf-8")
    parts: List[bytes] = [
        HEADER.pack(
            MODEL_MAGIC,
            MODEL_VERSION,
            len(model.layers),
            model.input_dim,
            model.class_count,
            len(model.input_shape),
        ),
        struct.pack(f"<{len(model.input_shape)}I", *model.input_shape),
        struct.pack("<H", len(name)),
        name,
    ]
    for layer in model.layers:
        spec = layer.spec
        parts.append(
            LAYER.pack(
                KIND_TAGS[spec.kind],
                spec.in_features or 0,
                spec.out_features or 0,
                spec.in_channels or 0,
                spec.out_channels or 0,
                spec.kernel,
                spec.pool,
                spec.rate,
                len(layer.params),
            )
        )
        for pname, value in layer.params.items():
            raw = pname.encode("ascii")
            parts.append(struct.pack("<B", len(raw)) + raw)
            parts.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
            parts.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(parts)


def _build_layer(spec: LayerSpec) -> Layer:
    rng = make_rng(0)
    if spec.kind == LayerKind.DENSE:
        return Dense(spec.in_features, spec.out_features, rng)
    if spec.kind == LayerKind.CONV2D:
        return Conv2D(spec.in_channels, spec.out_channels, spec.kernel, rng)
    if spec.kind == LayerKind.MAXPOOL:
        return MaxPool2D(spec.pool)
    if spec.kind == LayerKind.RELU:
        return ReLU()
    if spec.kind == LayerKind.DROPOUT:
        return Dropout(spec.rate)
    if spec.kind == LayerKind.FLATTEN:
        return Flatten()
    return Softmax()


def decode_model(blob: bytes) -> NetworkModel:
    reader = _Reader(blob)
    magic, version, layer_count, input_dim, class_count, rank = reader.unpack(HEADER)
    if magic != MODEL_MAGIC:
        raise BadMagicError(f"bad checkpoint magic {magic!r}")
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version}")
    input_shape = reader.unpack(f"<{rank}I")
    (name_len,) = reader.unpack("<H")
    name = reader.take(name_len).decode("utf-8")

    kinds = list(LayerKind)
    layers: List[Layer] = []
    for _ in range(layer_count):
        tag, in_f, out_f, in_c, out_c, kernel, pool, rate, param_count = reader.unpack(LAYER)
        if tag >= len(kinds):
            raise CheckpointError(f"unknown layer tag {tag}")
        try:
            spec = LayerSpec(
                kind=kinds[tag],
                in_features=in_f or None,
                out_features=out_f or None,
                in_channels=in_c or None,
                out_channels=out_c or None,
                kernel=kernel,
                pool=pool,
                rate=rate,
            )
        except ValueError as exc:
            raise CheckpointError(f"invalid layer record: {exc}") from exc
        layer = _build_layer(spec)
        for _ in range(param_count):
            (pname_len,) = reader.unpack("<B")
            pname = reader.take(pname_len).decode("ascii")
            (ndim,) = reader.unpack("<B")
            shape = reader.unpack(f"<{ndim}I")
            count = int(np.prod(shape))
            values = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(shape)
            if pname not in layer.params or layer.params[pname].shape != tuple(shape):
                raise CheckpointError(f"parameter {pname} {tuple(shape)} does not fit {spec.kind.value}")
            layer.params[pname] = values.astype(np.float64)
        layers.append(layer)
    return NetworkModel(name, layers, input_dim, tuple(input_shape), class_count)


def save_model(model: NetworkModel, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path: Union[str, Path]) -> NetworkModel:
    return decode_model(Path(path).read_bytes())
