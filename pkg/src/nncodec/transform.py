"""Orthonormal 2D DCT-II and the block partitioners feeding it.

Convolution kernels are cut into one block per (c_in, c_out) filter at the
kernel's own spatial size. Dense matrices and 1x1 convolutions are flattened
and chunked into 8x8 blocks, zero-padding the tail.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ArrangementMismatch, EmptyInput, WrongKind

MAX_BLOCK_SIDE = 64
VECTOR_BLOCK = 8


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix ``D`` with ``D[k, j] = a_k cos(pi (2j+1) k / 2n)``."""
    if not 1 <= n <= MAX_BLOCK_SIDE:
        raise ValueError(f"block side {n} outside [1, {MAX_BLOCK_SIDE}]")
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    d = np.cos(np.pi * (2 * j + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    d[0] /= np.sqrt(2.0)
    d.setflags(write=False)
    return d


def _as_blocks(blocks):
    b = np.asarray(blocks, dtype=np.float64)
    if b.ndim < 2:
        raise ValueError("blocks need at least two dimensions")
    return b


def dct2_forward(blocks, dtype=np.float32) -> np.ndarray:
    """Forward transform of one ``(h, w)`` block or a stack ``(..., h, w)``."""
    b = _as_blocks(blocks)
    dr, dc = dct_matrix(b.shape[-2]), dct_matrix(b.shape[-1])
    return (dr @ b @ dc.T).astype(dtype)


def dct2_inverse(coeffs, dtype=np.float32) -> np.ndarray:
    c = _as_blocks(coeffs)
    dr, dc = dct_matrix(c.shape[-2]), dct_matrix(c.shape[-1])
    return (dr.T @ c @ dc).astype(dtype)


@dataclass(frozen=True)
class BlockArrangement:
    original_len: int
    pad_len: int
    block_rows: int = VECTOR_BLOCK
    block_cols: int = VECTOR_BLOCK

    @property
    def block_count(self) -> int:
        return (self.original_len + self.pad_len) // (self.block_rows * self.block_cols)

    @classmethod
    def for_length(cls, n: int) -> "BlockArrangement":
        area = VECTOR_BLOCK * VECTOR_BLOCK
        return cls(n, (area - n % area) % area)


def kernel_blocks(kernel) -> np.ndarray:
    """Split an ``(h, w, c_in, c_out)`` kernel into ``c_out * c_in`` blocks of ``h x w``.

    Ordering is c_out-major, then c_in.
    """
    k = np.asarray(kernel)
    if k.ndim != 4:
        raise WrongKind(f"expected a 4-d conv kernel, got shape {k.shape}")
    h, w, cin, cout = k.shape
    if h == 1 and w == 1:
        raise WrongKind("1x1 kernels are block-arranged as vectors, not per filter")
    if h > MAX_BLOCK_SIDE or w > MAX_BLOCK_SIDE:
        raise WrongKind(f"kernel {h}x{w} exceeds the {MAX_BLOCK_SIDE}x{MAX_BLOCK_SIDE} block limit")
    return np.ascontiguousarray(k.transpose(3, 2, 0, 1)).reshape(cout * cin, h, w)


def reassemble(blocks, shape) -> np.ndarray:
    """Inverse of :func:`kernel_blocks` for a kernel of ``shape``."""
    h, w, cin, cout = shape
    b = np.asarray(blocks)
    if b.shape != (cout * cin, h, w):
        raise ArrangementMismatch(f"{b.shape} blocks cannot form kernel {tuple(shape)}")
    return np.ascontiguousarray(b.reshape(cout, cin, h, w).transpose(2, 3, 1, 0))


def vector_blocks(values):
    v = np.asarray(values).reshape(-1)
    if v.size == 0:
        raise EmptyInput("cannot block-arrange an empty vector")
    arr = BlockArrangement.for_length(v.size)
    padded = np.concatenate([v, np.zeros(arr.pad_len, dtype=v.dtype)])
    return padded.reshape(-1, VECTOR_BLOCK, VECTOR_BLOCK), arr


def unvector_blocks(blocks, arrangement: BlockArrangement) -> np.ndarray:
    b = np.asarray(blocks)
    area = arrangement.block_rows * arrangement.block_cols
    if not 0 <= arrangement.pad_len < area or arrangement.original_len < 0:
        raise ArrangementMismatch(f"bad arrangement {arrangement}")
    if (arrangement.original_len + arrangement.pad_len) % area:
        raise ArrangementMismatch("original_len + pad_len is not a whole number of blocks")
    if b.shape != (arrangement.block_count, arrangement.block_rows, arrangement.block_cols):
        raise ArrangementMismatch(
            f"{b.shape} blocks do not match arrangement {arrangement}"
        )
    return b.reshape(-1)[: arrangement.original_len].copy()
