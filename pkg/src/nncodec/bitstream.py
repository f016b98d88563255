"""Entropy coding and the NNC v1 compressed container.

Layout, all integers little-endian, every field byte aligned::

    b"NNC1" | u8 version | u8 bits | u32 layer count
    per layer:
        u16 name length | name (UTF-8)
        u8 kind tag | u8 ndim | ndim x u32 dims
        u8 method tag
        f32 prescale factor
        method metadata:
            QUANT, TRANSFORM   f32 grid offset, f32 grid step
            CODEBOOK           2**bits x f32 centroids
            RAW                (nothing)
        TRANSFORM on dense / conv1x1 only: u32 original_len, u8 pad_len
        u32 payload length | payload (one BZip2 stream)
    u32 arch_meta length | arch_meta

Payloads decompress to packed indices (1 byte each for bits <= 8, else u16)
or, for RAW, to the f32 values themselves.
"""

from __future__ import annotations

import bz2
import enum
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    IndexOutOfRange,
    InvalidModel,
    MalformedRecord,
    PayloadLengthMismatch,
    TruncatedRecord,
    UnsupportedVersion,
)
from .model_io import ParamKind, check_shape
from .quantizer import MAX_BITS, MIN_BITS, QuantizerConfig
from .transform import MAX_BLOCK_SIDE, BlockArrangement

MAGIC = b"NNC1"
VERSION = 1
BZ2_LEVEL = 9  # 900k block size


class Method(enum.IntEnum):
    RAW = 0
    TRANSFORM = 1  # DCT + uniform quantization
    CODEBOOK = 2   # k-means code book
    QUANT = 3      # uniform quantization, no transform


def entropy_compress(data: bytes) -> bytes:
    return bz2.compress(bytes(data), BZ2_LEVEL)


def entropy_decompress(data: bytes) -> bytes:
    """Decompress exactly one BZip2 stream; anything else is a MalformedRecord."""
    dec = bz2.BZ2Decompressor()
    try:
        out = dec.decompress(bytes(data))
    except (OSError, ValueError, EOFError) as exc:
        raise MalformedRecord(f"invalid BZip2 payload: {exc}") from None
    if not dec.eof:
        raise MalformedRecord("BZip2 payload is truncated")
    if dec.unused_data:
        raise MalformedRecord("trailing bytes after BZip2 stream")
    return out


def index_width(bits: int) -> int:
    return 1 if bits <= 8 else 2


def pack_indices(indices, bits: int) -> bytes:
    idx = np.asarray(indices).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= (1 << bits)):
        raise IndexOutOfRange(f"index does not fit in {bits} bits")
    dtype = np.uint8 if index_width(bits) == 1 else np.dtype("<u2")
    return idx.astype(dtype).tobytes()


def unpack_indices(data: bytes, count: int, bits: int) -> np.ndarray:
    width = index_width(bits)
    if len(data) != count * width:
        raise PayloadLengthMismatch(f"expected {count * width} index bytes, got {len(data)}")
    dtype = np.uint8 if width == 1 else np.dtype("<u2")
    idx = np.frombuffer(data, dtype=dtype).astype(np.uint16)
    if idx.size and idx.max() >= (1 << bits):
        raise IndexOutOfRange(f"index does not fit in {bits} bits")
    return idx


@dataclass(eq=False)
class EncodedLayer:
    name: str
    kind: ParamKind
    shape: tuple
    method: Method
    factor: float
    offset: float = 0.0
    step: float = 0.0
    centroids: np.ndarray | None = None
    arrangement: BlockArrangement | None = None
    payload: bytes = b""
    # encoder-side diagnostics; not serialized
    distortion: float | None = field(default=None, compare=False)

    @property
    def count(self) -> int:
        return math.prod(self.shape)

    def __eq__(self, other):
        if not isinstance(other, EncodedLayer):
            return NotImplemented
        cent = lambda c: None if c is None else np.asarray(c, "<f4").tobytes()
        return (
            (self.name, self.kind, tuple(self.shape), self.method, self.arrangement, bytes(self.payload))
            == (other.name, other.kind, tuple(other.shape), other.method, other.arrangement, bytes(other.payload))
            and _f32(self.factor) == _f32(other.factor)
            and _f32(self.offset) == _f32(other.offset)
            and _f32(self.step) == _f32(other.step)
            and cent(self.centroids) == cent(other.centroids)
        )


@dataclass(eq=False)
class CompressedModel:
    bits: int
    layers: list[EncodedLayer]
    arch_meta: bytes = b""
    version: int = VERSION

    def __eq__(self, other):
        if not isinstance(other, CompressedModel):
            return NotImplemented
        return (self.version, self.bits, bytes(self.arch_meta)) == (
            other.version, other.bits, bytes(other.arch_meta)
        ) and self.layers == other.layers


def _f32(x) -> bytes:
    return struct.pack("<f", x)


def needs_arrangement(layer: EncodedLayer) -> bool:
    return layer.method is Method.TRANSFORM and layer.kind in (ParamKind.DENSE, ParamKind.CONV1X1)


def record_bytes(layer: EncodedLayer, bits: int) -> bytes:
    name = layer.name.encode("utf-8")
    if not name or len(name) > 0xFFFF:
        raise MalformedRecord(f"layer name length {len(name)} not in [1, 65535]")
    parts = [
        struct.pack("<H", len(name)), name,
        struct.pack("<BB", layer.kind.tag, len(layer.shape)),
        struct.pack(f"<{len(layer.shape)}I", *layer.shape),
        struct.pack("<B", int(layer.method)),
        _f32(layer.factor),
    ]
    if layer.method in (Method.QUANT, Method.TRANSFORM):
        parts.append(struct.pack("<ff", layer.offset, layer.step))
    elif layer.method is Method.CODEBOOK:
        cent = np.asarray(layer.centroids, dtype="<f4")
        if cent.shape != (1 << bits,):
            raise MalformedRecord(f"code book has {cent.size} entries, expected {1 << bits}")
        parts.append(cent.tobytes())
    if needs_arrangement(layer):
        arr = layer.arrangement
        parts.append(struct.pack("<IB", arr.original_len, arr.pad_len))
    parts += [struct.pack("<I", len(layer.payload)), bytes(layer.payload)]
    return b"".join(parts)


def header_bytes(cm: CompressedModel) -> bytes:
    return MAGIC + struct.pack("<BBI", cm.version, cm.bits, len(cm.layers))


def trailer_bytes(cm: CompressedModel) -> bytes:
    return struct.pack("<I", len(cm.arch_meta)) + bytes(cm.arch_meta)


def write_compressed(cm: CompressedModel) -> bytes:
    QuantizerConfig(cm.bits)
    return b"".join(
        [header_bytes(cm), *(record_bytes(layer, cm.bits) for layer in cm.layers), trailer_bytes(cm)]
    )


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise TruncatedRecord(f"{what}: need {n} bytes at offset {self.pos}, file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _finite_f32(value, what, positive=False, nonneg=False):
    if not math.isfinite(value):
        raise MalformedRecord(f"{what} is not finite")
    if positive and value <= 0:
        raise MalformedRecord(f"{what} must be positive")
    if nonneg and value < 0:
        raise MalformedRecord(f"{what} must be non-negative")
    return value


def _read_record(r: _Reader, bits: int) -> EncodedLayer:
    (name_len,) = r.unpack("<H", "name length")
    try:
        name = r.take(name_len, "name").decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedRecord("layer name is not UTF-8") from None
    if not name:
        raise MalformedRecord("empty layer name")
    tag, ndim = r.unpack("<BB", "kind")
    try:
        kind = ParamKind.from_tag(tag)
    except KeyError:
        raise MalformedRecord(f"unknown kind tag {tag}") from None
    dims = r.unpack(f"<{ndim}I", "dims")
    try:
        shape = check_shape(kind, dims)
    except InvalidModel as exc:
        raise MalformedRecord(f"layer {name!r}: {exc}") from None
    (mtag,) = r.unpack("<B", "method")
    try:
        method = Method(mtag)
    except ValueError:
        raise MalformedRecord(f"unknown method tag {mtag}") from None
    (factor,) = r.unpack("<f", "prescale factor")
    layer = EncodedLayer(name, kind, shape, method, _finite_f32(factor, "prescale factor", positive=True))
    if method in (Method.QUANT, Method.TRANSFORM):
        offset, step = r.unpack("<ff", "quantizer grid")
        layer.offset = _finite_f32(offset, "grid offset")
        layer.step = _finite_f32(step, "grid step", nonneg=True)
    elif method is Method.CODEBOOK:
        k = 1 << bits
        cent = np.frombuffer(r.take(4 * k, "code book"), dtype="<f4").astype(np.float32)
        if not np.all(np.isfinite(cent)):
            raise MalformedRecord("code book has NaN/Inf centroids")
        layer.centroids = cent
    if method is Method.TRANSFORM and kind is ParamKind.CONV and max(shape[0], shape[1]) > MAX_BLOCK_SIDE:
        raise MalformedRecord("kernel too large for transform coding")
    if needs_arrangement(layer):
        original_len, pad_len = r.unpack("<IB", "block arrangement")
        arr = BlockArrangement(original_len, pad_len)
        if arr != BlockArrangement.for_length(layer.count):
            raise MalformedRecord(f"block arrangement {arr} inconsistent with shape {shape}")
        layer.arrangement = arr
    (plen,) = r.unpack("<I", "payload length")
    layer.payload = r.take(plen, "payload")
    return layer


def read_compressed(data: bytes) -> CompressedModel:
    data = bytes(data)
    if data[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {data[:4]!r}")
    r = _Reader(data)
    r.pos = 4
    version, bits, count = r.unpack("<BBI", "container header")
    if version != VERSION:
        raise UnsupportedVersion(f"NNC version {version} (supported: {VERSION})")
    if not MIN_BITS <= bits <= MAX_BITS:
        raise MalformedRecord(f"bit depth {bits} outside [{MIN_BITS}, {MAX_BITS}]")
    if count == 0:
        raise MalformedRecord("container has no layers")
    layers = []
    for _ in range(count):
        layers.append(_read_record(r, bits))
    (meta_len,) = r.unpack("<I", "arch_meta length")
    meta = r.take(meta_len, "arch_meta")
    if r.pos != len(data):
        raise MalformedRecord(f"{len(data) - r.pos} trailing bytes after container")
    return CompressedModel(bits, layers, meta, version)


def payload_spans(data: bytes):
    """Yield ``(name, start, stop)`` of every layer payload inside an NNC file."""
    data = bytes(data)
    cm = read_compressed(data)
    pos = len(header_bytes(cm))
    for layer in cm.layers:
        rec = record_bytes(layer, cm.bits)
        stop = pos + len(rec)
        yield layer.name, stop - len(layer.payload), stop
        pos = stop
