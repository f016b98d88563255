"""``nnc`` command line: compress, decompress, inspect, sweep."""

from __future__ import annotations

import argparse
import sys
import time

from . import bitstream, codec, harness
from .bitstream import Method
from .codec import MethodSet
from .errors import CodecError
from .inference import load_dataset
from .model_io import load_model, save_model, write_model

_METHOD_NAMES = {Method.RAW: "raw", Method.TRANSFORM: "dct+quant", Method.CODEBOOK: "codebook", Method.QUANT: "quant"}


def _bits_range(text):
    lo, sep, hi = text.partition("..")
    try:
        lo, hi = int(lo), int(hi if sep else lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return range(lo, hi + 1)


def _methods(text):
    try:
        return [MethodSet(m.strip()) for m in text.split(",") if m.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def cmd_compress(args):
    model = load_model(args.input)
    original = len(write_model(model))
    t0 = time.perf_counter()
    blob = codec.compress(model, args.bits, args.seed, args.method, args.workers)
    elapsed = time.perf_counter() - t0
    with open(args.output, "wb") as fh:
        fh.write(blob)
    print(f"{args.input} -> {args.output}: {original} -> {len(blob)} bytes, "
          f"factor {codec.compression_factor(original, len(blob)):.3f}, encode {elapsed:.3f}s")


def cmd_decompress(args):
    with open(args.input, "rb") as fh:
        data = fh.read()
    t0 = time.perf_counter()
    model = codec.decompress(data, args.workers)
    elapsed = time.perf_counter() - t0
    size = save_model(model, args.output)
    print(f"{args.input} -> {args.output}: {len(data)} -> {size} bytes, decode {elapsed:.3f}s")


def cmd_inspect(args):
    with open(args.input, "rb") as fh:
        data = fh.read()
    cm = bitstream.read_compressed(data)
    print(f"NNC v{cm.version}, {cm.bits} bits, {len(cm.layers)} layers, "
          f"{len(data)} bytes, arch_meta {len(cm.arch_meta)} bytes")
    for layer in cm.layers:
        record = len(bitstream.record_bytes(layer, cm.bits))
        line = (f"  {layer.name:<20} {layer.kind.value:<8} {'x'.join(map(str, layer.shape)):<14} "
                f"{_METHOD_NAMES[layer.method]:<10} record {record:>8} B  payload {len(layer.payload):>8} B  "
                f"prescale {layer.factor:.6g}")
        if layer.method in (Method.TRANSFORM, Method.QUANT):
            line += f"  offset {layer.offset:.6g} step {layer.step:.6g}"
        if layer.method is Method.CODEBOOK:
            line += f"  codebook {len(layer.centroids)} entries"
        if layer.arrangement is not None:
            line += f"  blocks {layer.arrangement.block_count}x8x8 pad {layer.arrangement.pad_len}"
        print(line)


def cmd_sweep(args):
    model = load_model(args.model)
    dataset = load_dataset(args.data)

    def report(p):
        print(f"  {p.method.value:<8} n={p.bits:<2} {p.compressed_bytes:>9} B  factor {p.factor:7.3f}  "
              f"top-{args.topk} {p.topk:.4f}  loss {p.loss_pp:+.2f} pp  "
              f"enc {p.encode_s:.3f}s dec {p.decode_s:.3f}s", file=sys.stderr)

    points = harness.rd_sweep(model, dataset, args.bits, args.methods, args.seed, args.topk,
                              args.workers, progress=report)
    with open(args.csv, "w", newline="") as fh:
        fh.write(harness.emit_csv(points))
    for method, levels in harness.summarize(points).items():
        cells = ", ".join(f"{lvl:g} pp: {'n/a' if f is None else f'{f:.2f}'}" for lvl, f in levels.items())
        print(f"{method.value}: factor at {cells}")


def build_parser():
    p = argparse.ArgumentParser(prog="nnc", description="Neural-network parameter codec.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="encode an NNM model into an NNC file")
    c.add_argument("--bits", type=int, required=True)
    c.add_argument("--method", type=MethodSet, default=MethodSet.FULL, choices=list(MethodSet),
                   metavar="{full,quant,cluster}")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("input")
    c.add_argument("output")
    c.set_defaults(func=cmd_compress)

    d = sub.add_parser("decompress", help="decode an NNC file back to NNM")
    d.add_argument("--workers", type=int, default=1)
    d.add_argument("input")
    d.add_argument("output")
    d.set_defaults(func=cmd_decompress)

    i = sub.add_parser("inspect", help="print per-layer records of an NNC file")
    i.add_argument("input")
    i.set_defaults(func=cmd_inspect)

    s = sub.add_parser("sweep", help="rate-distortion sweep over bit depths")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--bits", type=_bits_range, default=harness.DEFAULT_BITS)
    s.add_argument("--methods", type=_methods, default=list(MethodSet))
    s.add_argument("--csv", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--topk", type=int, default=5)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CodecError as exc:
        print(f"nnc: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"nnc: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
