"""Network parameter sets and the uncompressed NNM v1 container.

Layout (all integers little-endian)::

    b"NNM1"
    u64   header length
    bytes UTF-8 JSON header
    bytes tensor blobs (f32 LE, row-major), then the arch_meta blob

The header is compact JSON (``separators=(",", ":")``) of the form::

    {"layers":[{"name":..,"kind":..,"shape":[..],"offset":..,"length":..},..],
     "arch_meta":{"offset":..,"length":..}}

Offsets are relative to the first byte after the header. Blobs are written
contiguously in layer order with arch_meta last.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    DuplicateLayerName,
    InvalidModel,
    MalformedHeader,
    NonFiniteValue,
    TruncatedBlob,
)

MAGIC = b"NNM1"
F32 = np.dtype("<f4")


class ParamKind(enum.Enum):
    CONV = "conv"          # (h, w, c_in, c_out), h > 1 or w > 1
    CONV1X1 = "conv1x1"    # (c_in, c_out)
    DENSE = "dense"        # (rows, cols)
    BIAS = "bias"          # (len,)
    NORM = "norm"          # (len,)

    @property
    def tag(self) -> int:
        return _KIND_TAGS[self]

    @classmethod
    def from_tag(cls, tag: int) -> "ParamKind":
        return _TAG_KINDS[tag]


_KIND_TAGS = {k: i for i, k in enumerate(ParamKind)}
_TAG_KINDS = {i: k for k, i in _KIND_TAGS.items()}
_KIND_NDIM = {
    ParamKind.CONV: 4,
    ParamKind.CONV1X1: 2,
    ParamKind.DENSE: 2,
    ParamKind.BIAS: 1,
    ParamKind.NORM: 1,
}


def check_shape(kind: ParamKind, shape) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if len(shape) != _KIND_NDIM[kind]:
        raise InvalidModel(f"{kind.value} expects {_KIND_NDIM[kind]} dims, got {shape}")
    if any(d <= 0 for d in shape):
        raise InvalidModel(f"non-positive dimension in {shape}")
    if kind is ParamKind.CONV and shape[0] == 1 and shape[1] == 1:
        raise InvalidModel("1x1 kernels must use kind conv1x1")
    return shape


@dataclass(eq=False)
class LayerParams:
    name: str
    kind: ParamKind
    values: np.ndarray  # float32, shaped per kind

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    def validate(self):
        if not isinstance(self.name, str) or not self.name:
            raise InvalidModel("layer name must be a non-empty string")
        check_shape(self.kind, self.values.shape)
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteValue(f"layer {self.name!r} has NaN/Inf values")

    def __eq__(self, other):
        if not isinstance(other, LayerParams):
            return NotImplemented
        return (
            self.name == other.name
            and self.kind is other.kind
            and self.values.shape == other.values.shape
            and self.values.astype(F32).tobytes() == other.values.astype(F32).tobytes()
        )


@dataclass(eq=False)
class NetworkModel:
    layers: list[LayerParams]
    arch_meta: bytes = b""

    def validate(self):
        if not self.layers:
            raise InvalidModel("model has no layers")
        seen = set()
        for layer in self.layers:
            layer.validate()
            if layer.name in seen:
                raise DuplicateLayerName(f"duplicate layer name {layer.name!r}")
            seen.add(layer.name)
        if not isinstance(self.arch_meta, (bytes, bytearray)):
            raise InvalidModel("arch_meta must be bytes")

    def __getitem__(self, name: str) -> LayerParams:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def __contains__(self, name):
        return any(layer.name == name for layer in self.layers)

    def __eq__(self, other):
        if not isinstance(other, NetworkModel):
            return NotImplemented
        return bytes(self.arch_meta) == bytes(other.arch_meta) and self.layers == other.layers


def write_model(model: NetworkModel) -> bytes:
    try:
        model.validate()
    except NonFiniteValue as exc:
        raise InvalidModel(str(exc)) from exc

    entries, blobs, offset = [], [], 0
    for layer in model.layers:
        blob = np.ascontiguousarray(layer.values, dtype=F32).tobytes()
        entries.append({
            "name": layer.name,
            "kind": layer.kind.value,
            "shape": list(layer.shape),
            "offset": offset,
            "length": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    meta = bytes(model.arch_meta)
    header = {"layers": entries, "arch_meta": {"offset": offset, "length": len(meta)}}
    head = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<Q", len(head)), head, *blobs, meta])


def _field(entry, key, typ):
    try:
        value = entry[key]
    except (KeyError, TypeError):
        raise MalformedHeader(f"missing header field {key!r}") from None
    if not isinstance(value, typ) or isinstance(value, bool):
        raise MalformedHeader(f"header field {key!r} has wrong type")
    return value


def read_model(data: bytes) -> NetworkModel:
    data = bytes(data)
    if data[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < 12:
        raise MalformedHeader("missing header length")
    (head_len,) = struct.unpack_from("<Q", data, 4)
    if 12 + head_len > len(data):
        raise MalformedHeader("header length exceeds file size")
    try:
        header = json.loads(data[12:12 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise MalformedHeader("header must be a JSON object")

    body = memoryview(data)[12 + head_len:]

    def blob(entry):
        off = _field(entry, "offset", int)
        length = _field(entry, "length", int)
        if off < 0 or length < 0 or off + length > len(body):
            raise TruncatedBlob(f"blob [{off}, {off + length}) outside data of {len(body)} bytes")
        return body[off:off + length], off + length

    layers, seen, end = [], set(), 0
    for entry in _field(header, "layers", list):
        name = _field(entry, "name", str)
        try:
            kind = ParamKind(_field(entry, "kind", str))
        except ValueError:
            raise MalformedHeader(f"unknown kind {entry['kind']!r}") from None
        shape = _field(entry, "shape", list)
        if not all(isinstance(d, int) and not isinstance(d, bool) for d in shape):
            raise MalformedHeader("shape must be a list of integers")
        try:
            shape = check_shape(kind, shape)
        except InvalidModel as exc:
            raise MalformedHeader(str(exc)) from None
        raw, stop = blob(entry)
        if len(raw) != 4 * math.prod(shape):
            raise MalformedHeader(f"layer {name!r}: blob length does not match shape {shape}")
        values = np.frombuffer(raw, dtype=F32).astype(np.float32).reshape(shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue(f"layer {name!r} has NaN/Inf values")
        if name in seen:
            raise DuplicateLayerName(f"duplicate layer name {name!r}")
        if not name:
            raise MalformedHeader("empty layer name")
        seen.add(name)
        layers.append(LayerParams(name, kind, values))
        end = max(end, stop)
    if not layers:
        raise MalformedHeader("model has no layers")

    meta_raw, stop = blob(_field(header, "arch_meta", dict))
    end = max(end, stop)
    if end != len(body):
        raise MalformedHeader(f"{len(body) - end} trailing bytes after blobs")
    return NetworkModel(layers, bytes(meta_raw))


def load_model(path) -> NetworkModel:
    with open(path, "rb") as fh:
        return read_model(fh.read())


def save_model(model: NetworkModel, path):
    data = write_model(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)
