"""Rate-distortion sweeps: encode, decode, re-evaluate, repeat per bit depth."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

from . import codec
from .codec import MethodSet
from .errors import CodecError, EmptyDataset, NotBracketed
from .inference import ToyDataset, parse_graph, top_k_accuracy
from .model_io import NetworkModel, write_model
from .quantizer import QuantizerConfig

CSV_HEADER = ["method", "bits", "compressed_bytes", "factor", "topk", "loss_pp"]
DEFAULT_BITS = range(3, 11)
METHOD_ORDER = {m: i for i, m in enumerate(MethodSet)}

# Full-pipeline compression factors at 1% / 2% Top-5 loss reported for the
# ImageNet-scale networks. Reference only; not reproducible with toy models.
REFERENCE_FACTORS = {
    "GoogLeNet": (10.6, 12.4),
    "ResNet": (8.1, 9.7),
    "AlexNet": (6.7, 7.7),
    "SqueezeNet": (6.3, 7.4),
    "Average": (7.9, 9.3),
}


@dataclass
class RDPoint:
    method: MethodSet
    bits: int
    compressed_bytes: int
    factor: float
    topk: float
    loss_pp: float
    encode_s: float = 0.0
    decode_s: float = 0.0

    def row(self):
        return [self.method.value, self.bits, self.compressed_bytes,
                f"{self.factor:.9g}", f"{self.topk:.9g}", f"{self.loss_pp:.9g}"]


def sweep_point(model, dataset, bits, method, seed, k, baseline, original_size, graph, workers=1):
    t0 = time.perf_counter()
    blob = codec.compress(model, bits, seed, method, workers)
    t1 = time.perf_counter()
    decoded = codec.decompress(blob, workers)
    t2 = time.perf_counter()
    acc = top_k_accuracy(decoded, dataset, k, graph)
    return RDPoint(method, bits, len(blob), codec.compression_factor(original_size, len(blob)),
                   acc, 100.0 * (baseline - acc), t1 - t0, t2 - t1)


def rd_sweep(model: NetworkModel, dataset: ToyDataset, bits_range=DEFAULT_BITS,
             method_sets=tuple(MethodSet), seed: int = 0, k: int = 5, workers: int = 1,
             progress=None) -> list[RDPoint]:
    bits_range = sorted(set(int(b) for b in bits_range))
    for b in bits_range:
        QuantizerConfig(b)
    if len(dataset) == 0:
        raise EmptyDataset("dataset has no samples")
    methods = sorted({MethodSet(m) for m in method_sets}, key=METHOD_ORDER.get)
    graph = parse_graph(model.arch_meta)
    original_size = len(write_model(model))
    baseline = top_k_accuracy(model, dataset, k, graph)

    points = []
    for method in methods:
        for bits in bits_range:
            try:
                point = sweep_point(model, dataset, bits, method, seed, k, baseline, original_size, graph, workers)
            except CodecError as exc:
                raise type(exc)(f"sweep point ({method.value}, {bits} bits): {exc}") from exc
            if progress:
                progress(point)
            points.append(point)
    return points


def interpolate_factor_at_loss(points, loss_pp: float) -> float:
    """Compression factor at which a curve first reaches ``loss_pp`` accuracy loss.

    Points are ordered by factor and the first segment whose losses bracket
    ``loss_pp`` is interpolated linearly.
    """
    pts = sorted(((p.factor, p.loss_pp) if isinstance(p, RDPoint) else tuple(p) for p in points))
    for f, loss in pts:
        if loss == loss_pp:
            return float(f)
    for (f0, l0), (f1, l1) in zip(pts, pts[1:]):
        if min(l0, l1) <= loss_pp <= max(l0, l1) and l0 != l1:
            return float(f0 + (loss_pp - l0) * (f1 - f0) / (l1 - l0))
    raise NotBracketed(f"no pair of points brackets a {loss_pp} pp loss")


def emit_csv(points) -> str:
    rows = sorted(points, key=lambda p: (METHOD_ORDER[p.method], p.bits))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for p in rows:
        writer.writerow(p.row())
    return buf.getvalue()


def parse_csv(text: str) -> list[RDPoint]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [
        RDPoint(MethodSet(r["method"]), int(r["bits"]), int(r["compressed_bytes"]),
                float(r["factor"]), float(r["topk"]), float(r["loss_pp"]))
        for r in reader
    ]


def summarize(points, levels=(1.0, 2.0)):
    """``{method: {loss_pp: factor or None}}`` at the given accuracy-loss levels."""
    out = {}
    for method in sorted({p.method for p in points}, key=METHOD_ORDER.get):
        curve = [p for p in points if p.method is method]
        out[method] = {}
        for level in levels:
            try:
                out[method][level] = interpolate_factor_at_loss(curve, level)
            except NotBracketed:
                out[method][level] = None
    return out
