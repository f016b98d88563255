"""Uniform scalar quantizer anchored at the data minimum.

One grid per tensor; every value (every DCT coefficient, whatever its
frequency) uses the same step.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyInput, IndexOutOfRange, NonFiniteInput

MIN_BITS = 2
MAX_BITS = 16


@dataclass(frozen=True)
class QuantizerConfig:
    bits: int

    def __post_init__(self):
        if isinstance(self.bits, bool) or not isinstance(self.bits, (int, np.integer)):
            raise ConfigError(f"bit depth must be an integer, got {self.bits!r}")
        if not MIN_BITS <= self.bits <= MAX_BITS:
            raise ConfigError(f"bit depth {self.bits} outside [{MIN_BITS}, {MAX_BITS}]")

    @property
    def levels(self) -> int:
        return 1 << self.bits


@dataclass(frozen=True)
class QuantGrid:
    offset: float  # reconstruction value of index 0, representable as f32
    step: float    # representable as f32; 0 only for constant input

    def levels(self, count):
        return (np.float64(self.offset) + np.float64(self.step) * np.arange(count)).astype(np.float32)


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _checked(values):
    v = np.asarray(values, dtype=np.float32).reshape(-1)
    if v.size == 0:
        raise EmptyInput("cannot quantize an empty sequence")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("quantizer input contains NaN/Inf")
    return v


def fit_grid(values, levels: int) -> QuantGrid:
    """Grid spanning ``[min, max]`` of ``values`` with ``levels`` points."""
    v = _checked(values)
    lo, hi = np.float64(v.min()), np.float64(v.max())
    if lo == hi:
        return QuantGrid(float(lo), 0.0)
    step = np.float32((hi - lo) / (levels - 1))
    # a denormal-range span can round the step to zero
    if step == 0:
        step = np.nextafter(np.float32(0), np.float32(1))
    return QuantGrid(float(lo), float(step))


def quantize(values, cfg: QuantizerConfig):
    """Return ``(indices, grid)``; indices are ``uint16`` in ``[0, 2**bits)``."""
    v = _checked(values)
    grid = fit_grid(v, cfg.levels)
    if grid.step == 0:
        return np.zeros(v.size, dtype=np.uint16), grid
    scaled = (v.astype(np.float64) - grid.offset) / np.float64(grid.step)
    idx = np.clip(round_half_away(scaled), 0, cfg.levels - 1).astype(np.uint16)
    return idx, grid


def dequantize(indices, grid: QuantGrid, bits: int = MAX_BITS, dtype=np.float32):
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= (1 << bits)):
        raise IndexOutOfRange(f"index outside [0, {1 << bits})")
    out = np.float64(grid.offset) + np.float64(grid.step) * idx.astype(np.float64)
    return out.astype(dtype)
