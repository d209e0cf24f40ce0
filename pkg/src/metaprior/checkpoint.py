"""Binary checkpoint format for trained meta-initializations.

Layout (all integers little-endian)::

    magic      4s   b"MPRI"
    version    u8   FORMAT_VERSION
    byteorder  c    b"<"
    precision  u8   8 (bytes per float)
    n_layers   u32
    layers     n_layers x (input u32, output u32, activation u8)
    iteration  u64  outer iterations completed
    seed       i64
    n_values   u64
    values     n_values x float64 little-endian, layer-major
    crc32      u32  over every preceding byte
"""

import os
import struct
import tempfile
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, StructuralError
from .nn import ACTIVATIONS, LayerSpec, WeightVector

MAGIC = b"MPRI"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<4sBcBI")
_LAYER = struct.Struct("<IIB")
_META = struct.Struct("<QqQ")
_CRC = struct.Struct("<I")


@dataclass(frozen=True)
class Checkpoint:
    theta: WeightVector
    iteration: int
    seed: int

    @property
    def layout(self):
        return self.theta.layout


def encode(ckpt: Checkpoint) -> bytes:
    layout = ckpt.theta.layout
    parts = [_HEAD.pack(MAGIC, FORMAT_VERSION, b"<", 8, len(layout))]
    for layer in layout:
        parts.append(_LAYER.pack(layer.input_dim, layer.output_dim,
                                 ACTIVATIONS.index(layer.activation)))
    parts.append(_META.pack(ckpt.iteration, ckpt.seed, len(ckpt.theta)))
    parts.append(ckpt.theta.values.astype("<f8").tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def decode(data: bytes) -> Checkpoint:
    if len(data) < _HEAD.size + _CRC.size:
        raise CheckpointError("checkpoint is truncated")
    body, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
    magic, version, order, precision, n_layers = _HEAD.unpack_from(body, 0)
    if magic != MAGIC:
        raise CheckpointError("not a metaprior checkpoint (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch (corrupted file)")
    if order != b"<" or precision != 8:
        raise CheckpointError("checkpoint must hold little-endian 64-bit floats")
    offset = _HEAD.size
    try:
        layers = []
        for _ in range(n_layers):
            i, o, act = _LAYER.unpack_from(body, offset)
            offset += _LAYER.size
            layers.append(LayerSpec(i, o, ACTIVATIONS[act]))
        iteration, seed, n_values = _META.unpack_from(body, offset)
        offset += _META.size
    except (struct.error, IndexError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from exc
    if len(body) - offset != 8 * n_values:
        raise CheckpointError("weight count does not match payload size")
    values = np.frombuffer(body, dtype="<f8", count=n_values, offset=offset)
    try:
        theta = WeightVector(values.astype(np.float64), tuple(layers))
    except StructuralError as exc:
        raise CheckpointError(f"checkpoint layout invalid: {exc}") from exc
    return Checkpoint(theta, iteration, seed)


def save(path, ckpt: Checkpoint) -> None:
    """Write atomically so a crash never leaves a half-written checkpoint."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(encode(ckpt))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(data)
