"""Small forward-pass evaluator for linear-chain classifiers.

The network graph lives in the model's ``arch_meta`` as plain text, one op
per line (``#`` starts a comment)::

    input 1 16 16          # C H W, or a single length for flat inputs
    conv conv1.w conv1.b   # kernel (h, w, c_in, c_out), stride 1, same padding
    scale bn1.g            # per-channel multiply by a norm vector
    relu
    maxpool2               # 2x2, stride 2
    conv1x1 mix.w mix.b    # weights (c_in, c_out)
    flatten
    dense fc.w fc.b        # weights (out, in): y = W x + b
    softmax

Bias operands are optional. Activations are channel-first.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    EmptyDataset,
    GraphSyntaxError,
    MalformedHeader,
    ShapeMismatch,
    TruncatedBlob,
    UnknownLayer,
)
from .model_io import NetworkModel, ParamKind

DATASET_MAGIC = b"NND1"
BATCH = 256

_ARITY = {
    "conv": (1, 2), "conv1x1": (1, 2), "dense": (1, 2), "scale": (1, 1),
    "relu": (0, 0), "maxpool2": (0, 0), "flatten": (0, 0), "softmax": (0, 0),
}
_KINDS = {
    "conv": ParamKind.CONV, "conv1x1": ParamKind.CONV1X1,
    "dense": ParamKind.DENSE, "scale": ParamKind.NORM,
}


@dataclass(frozen=True)
class Graph:
    input_shape: tuple
    ops: tuple  # (op, operand names...)

    def to_text(self) -> str:
        lines = ["input " + " ".join(map(str, self.input_shape))]
        lines += [" ".join(op) for op in self.ops]
        return "\n".join(lines) + "\n"


def parse_graph(text) -> Graph:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError:
            raise GraphSyntaxError("graph description is not UTF-8") from None
    input_shape, ops = None, []
    for lineno, line in enumerate(text.splitlines(), 1):
        tokens = line.split("#", 1)[0].split()
        if not tokens:
            continue
        op, args = tokens[0], tokens[1:]
        if op == "input":
            if input_shape is not None or ops:
                raise GraphSyntaxError(f"line {lineno}: 'input' must come first, once")
            try:
                input_shape = tuple(int(a) for a in args)
            except ValueError:
                raise GraphSyntaxError(f"line {lineno}: bad input shape {args}") from None
            if len(input_shape) not in (1, 3) or min(input_shape) <= 0:
                raise GraphSyntaxError(f"line {lineno}: input must be 'C H W' or 'N'")
            continue
        if op not in _ARITY:
            raise GraphSyntaxError(f"line {lineno}: unknown op {op!r}")
        lo, hi = _ARITY[op]
        if not lo <= len(args) <= hi:
            raise GraphSyntaxError(f"line {lineno}: {op} takes {lo}..{hi} operands")
        ops.append((op, *args))
    if input_shape is None:
        raise GraphSyntaxError("graph has no 'input' line")
    return Graph(input_shape, tuple(ops))


def _tensor(model, name, kind):
    try:
        layer = model[name]
    except KeyError:
        raise UnknownLayer(f"graph references missing layer {name!r}") from None
    if kind is not None and layer.kind is not kind:
        raise ShapeMismatch(f"layer {name!r} is {layer.kind.value}, expected {kind.value}")
    return layer.values.astype(np.float32)


def _bias(model, args, n):
    if len(args) < 2:
        return None
    b = _tensor(model, args[1], ParamKind.BIAS)
    if b.shape != (n,):
        raise ShapeMismatch(f"bias {args[1]!r} has shape {b.shape}, expected ({n},)")
    return b


def _conv(x, kernel):
    h, w, cin, cout = kernel.shape
    if x.ndim != 4 or x.shape[1] != cin:
        raise ShapeMismatch(f"conv expects (N, {cin}, H, W), got {x.shape}")
    top, left = (h - 1) // 2, (w - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (top, h - 1 - top), (left, w - 1 - left)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (h, w), axis=(2, 3))
    return np.einsum("nchwij,ijco->nohw", win, kernel, optimize=True)


def _apply(model, op, args, x):
    if op == "relu":
        return np.maximum(x, 0)
    if op == "flatten":
        return x.reshape(x.shape[0], -1)
    if op == "softmax":
        e = np.exp(x - x.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    if op == "maxpool2":
        if x.ndim != 4:
            raise ShapeMismatch(f"maxpool2 expects (N, C, H, W), got {x.shape}")
        n, c, hh, ww = x.shape
        x = x[:, :, : hh // 2 * 2, : ww // 2 * 2]
        return x.reshape(n, c, hh // 2, 2, ww // 2, 2).max(axis=(3, 5))

    w = _tensor(model, args[0], _KINDS[op])
    if op == "scale":
        if x.shape[1] != w.shape[0]:
            raise ShapeMismatch(f"scale {args[0]!r} has {w.shape[0]} channels, activations {x.shape[1]}")
        return x * w.reshape((1, -1) + (1,) * (x.ndim - 2))
    if op == "conv":
        y = _conv(x, w)
    elif op == "conv1x1":
        if x.ndim != 4 or x.shape[1] != w.shape[0]:
            raise ShapeMismatch(f"conv1x1 expects (N, {w.shape[0]}, H, W), got {x.shape}")
        y = np.einsum("nchw,co->nohw", x, w, optimize=True)
    else:
        if x.ndim != 2 or x.shape[1] != w.shape[1]:
            raise ShapeMismatch(f"dense {args[0]!r} expects (N, {w.shape[1]}), got {x.shape}")
        y = x @ w.T
    b = _bias(model, args, y.shape[1])
    if b is not None:
        y = y + b.reshape((1, -1) + (1,) * (y.ndim - 2))
    return y


def forward_batch(model: NetworkModel, inputs, graph: Graph | None = None) -> np.ndarray:
    """Class scores for a batch ``(N, *input_shape)``."""
    graph = graph or parse_graph(model.arch_meta)
    x = np.asarray(inputs, dtype=np.float32)
    if x.shape[1:] != graph.input_shape:
        raise ShapeMismatch(f"inputs {x.shape[1:]} do not match graph input {graph.input_shape}")
    for op, *args in graph.ops:
        x = _apply(model, op, args, x).astype(np.float32)
    if x.ndim != 2:
        raise ShapeMismatch(f"graph output has shape {x.shape[1:]}, expected a score vector")
    return x


def forward(model: NetworkModel, sample, graph: Graph | None = None) -> np.ndarray:
    return forward_batch(model, np.asarray(sample, dtype=np.float32)[None], graph)[0]


@dataclass
class ToyDataset:
    inputs: np.ndarray  # (N, *shape) float32
    labels: np.ndarray  # (N,) int
    class_count: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[:1] != self.labels.shape:
            raise ShapeMismatch("one label per sample required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ShapeMismatch("label outside [0, class_count)")

    def __len__(self):
        return len(self.labels)


def label_ranks(scores, labels) -> np.ndarray:
    """0-based rank of each true label; equal scores rank the lower class first."""
    s = np.asarray(scores)
    lab = np.asarray(labels)
    own = s[np.arange(len(lab)), lab][:, None]
    cls = np.arange(s.shape[1])[None, :]
    ahead = (s > own) | ((s == own) & (cls < lab[:, None]))
    return ahead.sum(axis=1)


def top_k_accuracy(model: NetworkModel, dataset: ToyDataset, k: int = 5, graph: Graph | None = None) -> float:
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(dataset) == 0:
        raise EmptyDataset("dataset has no samples")
    graph = graph or parse_graph(model.arch_meta)
    hits = 0
    for i in range(0, len(dataset), BATCH):
        scores = forward_batch(model, dataset.inputs[i:i + BATCH], graph)
        hits += int(np.sum(label_ranks(scores, dataset.labels[i:i + BATCH]) < k))
    return hits / len(dataset)


def write_dataset(ds: ToyDataset) -> bytes:
    shape = ds.inputs.shape[1:]
    head = DATASET_MAGIC + struct.pack(f"<IB{len(shape)}II", len(ds), len(shape), *shape, ds.class_count)
    return head + ds.inputs.astype("<f4").tobytes() + ds.labels.astype("<u2").tobytes()


def read_dataset(data: bytes) -> ToyDataset:
    data = bytes(data)
    if data[:4] != DATASET_MAGIC:
        raise BadMagic(f"expected {DATASET_MAGIC!r}, got {data[:4]!r}")
    if len(data) < 9:
        raise MalformedHeader("dataset header truncated")
    count, ndim = struct.unpack_from("<IB", data, 4)
    pos = 9
    if len(data) < pos + 4 * ndim + 4:
        raise MalformedHeader("dataset header truncated")
    shape = struct.unpack_from(f"<{ndim}I", data, pos)
    (classes,) = struct.unpack_from("<I", data, pos + 4 * ndim)
    pos += 4 * ndim + 4
    if ndim == 0 or min(shape) == 0 or classes == 0:
        raise MalformedHeader(f"bad dataset shape {shape} / class count {classes}")
    n_in = count * math.prod(shape)
    if len(data) != pos + 4 * n_in + 2 * count:
        raise TruncatedBlob(f"dataset payload is {len(data) - pos} bytes, expected {4 * n_in + 2 * count}")
    inputs = np.frombuffer(data, "<f4", n_in, pos).reshape((count, *shape))
    labels = np.frombuffer(data, "<u2", count, pos + 4 * n_in)
    return ToyDataset(inputs, labels, classes)


def load_dataset(path) -> ToyDataset:
    with open(path, "rb") as fh:
        return read_dataset(fh.read())
