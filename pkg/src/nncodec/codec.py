"""Encode/decode pipeline: per-layer method dispatch over the coding stages.

``full`` (the complete codec)
    conv kernels        -> prescale -> per-filter DCT -> quantize
    dense / 1x1 conv    -> prescale -> 8x8 blocks -> DCT -> quantize
    biases / norms      -> prescale -> k-means code book
``quant``   every tensor -> prescale -> quantize
``cluster`` every tensor -> prescale -> k-means code book

Tensors with fewer than two elements are stored raw. Every payload is one
BZip2 stream. Layers are independent, so they may be encoded on a thread
pool; the output depends only on (model, bits, seed, method set).
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bitstream
from .bitstream import CompressedModel, EncodedLayer, Method
from .codebook import codebook_decode, kmeans_encode, layer_seed
from .errors import CodecError, NonFiniteValue, PayloadLengthMismatch, ZeroCompressedSize, with_layer
from .model_io import LayerParams, NetworkModel, ParamKind
from .prescale import prescale
from .quantizer import QuantGrid, QuantizerConfig, dequantize, quantize
from .transform import (
    dct2_forward,
    dct2_inverse,
    kernel_blocks,
    reassemble,
    unvector_blocks,
    vector_blocks,
)


class MethodSet(str, enum.Enum):
    FULL = "full"
    QUANT = "quant"
    CLUSTER = "cluster"


_CODEBOOK_KINDS = (ParamKind.BIAS, ParamKind.NORM)


def method_for(kind: ParamKind, size: int, method_set: MethodSet) -> Method:
    if size < 2:
        return Method.RAW
    if method_set is MethodSet.QUANT:
        return Method.QUANT
    if method_set is MethodSet.CLUSTER or kind in _CODEBOOK_KINDS:
        return Method.CODEBOOK
    return Method.TRANSFORM


def _config(cfg) -> QuantizerConfig:
    return cfg if isinstance(cfg, QuantizerConfig) else QuantizerConfig(int(cfg))


def encode_layer(layer: LayerParams, cfg: QuantizerConfig, seed: int, method_set: MethodSet) -> EncodedLayer:
    method = method_for(layer.kind, layer.values.size, method_set)
    enc = EncodedLayer(layer.name, layer.kind, layer.shape, method, 1.0)
    if method is Method.RAW:
        enc.payload = bitstream.entropy_compress(layer.values.astype("<f4").tobytes())
        return enc

    scaled, enc.factor = prescale(layer.values)
    if method is Method.CODEBOOK:
        res = kmeans_encode(scaled.reshape(-1), cfg, layer_seed(layer.name, seed))
        enc.centroids, enc.distortion, idx = res.centroids, res.distortion, res.indices
    else:
        if method is Method.QUANT:
            coeffs = scaled.reshape(-1)
        elif layer.kind is ParamKind.CONV:
            coeffs = dct2_forward(kernel_blocks(scaled))
        else:
            blocks, enc.arrangement = vector_blocks(scaled)
            coeffs = dct2_forward(blocks)
        idx, grid = quantize(coeffs.reshape(-1), cfg)
        enc.offset, enc.step = grid.offset, grid.step
    enc.payload = bitstream.entropy_compress(bitstream.pack_indices(idx, cfg.bits))
    return enc


def decode_layer(enc: EncodedLayer, bits: int) -> LayerParams:
    raw = bitstream.entropy_decompress(enc.payload)
    count = enc.count
    if enc.method is Method.RAW:
        if len(raw) != 4 * count:
            raise PayloadLengthMismatch(f"expected {4 * count} raw bytes, got {len(raw)}")
        values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    elif enc.method is Method.CODEBOOK:
        idx = bitstream.unpack_indices(raw, count, bits)
        values = codebook_decode(idx, enc.centroids).astype(np.float64)
    else:
        grid = QuantGrid(enc.offset, enc.step)
        if enc.method is Method.QUANT:
            values = dequantize(bitstream.unpack_indices(raw, count, bits), grid, bits, np.float64)
        elif enc.kind is ParamKind.CONV:
            h, w, cin, cout = enc.shape
            coeffs = dequantize(bitstream.unpack_indices(raw, count, bits), grid, bits, np.float64)
            values = reassemble(dct2_inverse(coeffs.reshape(-1, h, w), np.float64), enc.shape)
        else:
            arr = enc.arrangement
            n = arr.block_count * arr.block_rows * arr.block_cols
            coeffs = dequantize(bitstream.unpack_indices(raw, n, bits), grid, bits, np.float64)
            blocks = dct2_inverse(coeffs.reshape(-1, arr.block_rows, arr.block_cols), np.float64)
            values = unvector_blocks(blocks, arr)
    with np.errstate(over="ignore"):
        out = (values * np.float64(np.float32(enc.factor))).astype(np.float32).reshape(enc.shape)
    if not np.all(np.isfinite(out)):
        raise NonFiniteValue("decoded values overflow float32")
    return LayerParams(enc.name, enc.kind, out)


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def encode_network(model: NetworkModel, cfg, seed: int = 0, method_set=MethodSet.FULL,
                   workers: int = 1) -> CompressedModel:
    cfg = _config(cfg)
    method_set = MethodSet(method_set)
    model.validate()

    def one(layer):
        try:
            return encode_layer(layer, cfg, seed, method_set)
        except CodecError as exc:
            raise with_layer(exc, layer.name) from exc

    return CompressedModel(cfg.bits, _map(one, model.layers, workers), bytes(model.arch_meta))


def decode_network(compressed, workers: int = 1) -> NetworkModel:
    """Decode a :class:`CompressedModel` (or raw NNC bytes) back to a model."""
    if not isinstance(compressed, CompressedModel):
        compressed = bitstream.read_compressed(compressed)

    def one(enc):
        try:
            return decode_layer(enc, compressed.bits)
        except CodecError as exc:
            raise with_layer(exc, enc.name) from exc

    model = NetworkModel(_map(one, compressed.layers, workers), bytes(compressed.arch_meta))
    model.validate()
    return model


def compress(model: NetworkModel, bits, seed: int = 0, method_set=MethodSet.FULL, workers: int = 1) -> bytes:
    return bitstream.write_compressed(encode_network(model, bits, seed, method_set, workers))


def decompress(data: bytes, workers: int = 1) -> NetworkModel:
    return decode_network(bitstream.read_compressed(data), workers)


def compression_factor(original: int, compressed: int) -> float:
    if compressed <= 0:
        raise ZeroCompressedSize("compressed size must be positive")
    return original / compressed
