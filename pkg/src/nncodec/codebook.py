"""Multi-start 1-D k-means code books for biases and normalization vectors.

Ten random initializations plus one seeded from the uniform quantizer grid
each run 50 Lloyd steps; the code book with the smallest squared error wins.
The grid-seeded start guarantees the result is never worse than uniform
quantization with the same number of levels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, IndexOutOfRange, NonFiniteInput
from .quantizer import QuantGrid, QuantizerConfig, fit_grid

RANDOM_INITS = 10
LLOYD_STEPS = 50

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _U64
    return h


def layer_seed(name: str, seed: int) -> int:
    """Per-layer seed, independent of the order in which layers are encoded."""
    return fnv1a64(name.encode("utf-8")) ^ (int(seed) & _U64)


@dataclass
class ClusterResult:
    centroids: np.ndarray  # float32, length 2**bits
    indices: np.ndarray    # uint16
    distortion: float      # sum of squared errors against the f32 centroids
    init: int = 0          # winning initialization; RANDOM_INITS is the grid start

    @property
    def k(self):
        return len(self.centroids)


def _boundaries(uniq, first):
    """Midpoints between neighbouring distinct centroids, and for each one
    whether a value exactly on it belongs to the right-hand centroid."""
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    return mids, first[1:] < first[:-1]


def assign(values, centroids):
    """Nearest-centroid index per value; ties go to the lowest centroid index."""
    c = np.asarray(centroids, dtype=np.float32).astype(np.float64)
    # unique() keeps the first (lowest) index of duplicated centroids
    uniq, first = np.unique(c, return_index=True)
    x = np.asarray(values, dtype=np.float64)
    if len(uniq) == 1:
        return np.full(x.shape, first[0], dtype=np.int64)
    mids, tie_right = _boundaries(uniq, first)
    pos = np.searchsorted(mids, x, side="left")
    on_mid = pos < len(mids)
    on_mid[on_mid] = x[on_mid] == mids[pos[on_mid]]
    pos[on_mid] += tie_right[pos[on_mid]]
    return first[pos]


def sse(values, centroids, indices) -> float:
    c = np.asarray(centroids, dtype=np.float32).astype(np.float64)
    d = np.asarray(values, dtype=np.float64) - c[indices]
    return float(np.dot(d, d))


def lloyd(values, centroids, steps=LLOYD_STEPS, history=None):
    """Run up to ``steps`` Lloyd iterations from ``centroids``.

    Works on the sorted values, where every cluster is a contiguous run.
    Returns ``(centroids_f32, indices, distortion)`` for the best iterate,
    never worse than the start. If ``history`` is a list, the distortion
    after each assignment is appended to it.
    """
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    csum = np.concatenate([[0.0], np.cumsum(xs)])
    n = len(xs)
    start = np.asarray(centroids, dtype=np.float32).copy()
    c = start.astype(np.float64)
    k = len(c)
    best_c, best_d = None, np.inf
    for _ in range(steps + 1):
        # distinct centroids in value order; duplicates resolve to the lowest index
        oc = np.argsort(c, kind="stable")
        sc = c[oc]
        keep = np.empty(k, dtype=bool)
        keep[0] = True
        np.not_equal(sc[1:], sc[:-1], out=keep[1:])
        uniq, first = sc[keep], oc[keep]
        m = len(uniq)
        edges = np.empty(m + 1, dtype=np.int64)
        edges[0], edges[m] = 0, n
        if m > 1:
            mids, tie_right = _boundaries(uniq, first)
            edges[1:m] = np.where(tie_right, np.searchsorted(xs, mids, "left"), np.searchsorted(xs, mids, "right"))
        run = edges[1:] - edges[:-1]
        s1 = csum[edges[1:]] - csum[edges[:-1]]
        err = xs - np.repeat(uniq, run)
        dist = float(np.dot(err, err))
        if history is not None:
            history.append(dist)
        if dist < best_d:
            best_c, best_d = c.astype(np.float32), dist
        if dist == 0.0:
            break
        filled = run > 0
        owners = first[filled]
        new = c.copy()
        new[owners] = s1[filled] / run[filled]
        new = new.astype(np.float32).astype(np.float64)
        if len(owners) < k:
            empty = np.ones(k, dtype=bool)
            empty[owners] = False
            empty = np.flatnonzero(empty)
            # farthest points from their updated centroid; ties to the lowest
            # original position, as repeated first-argmax picks would give
            e2 = (xs - new[np.repeat(first, run)]) ** 2
            far = np.lexsort((order, -e2))[: len(empty)]
            far = far[e2[far] > 0.0]
            new[empty[: len(far)]] = xs[far].astype(np.float32)
        # assignment depends only on the centroids, so equal centroids mean a fixed point
        if np.array_equal(new, c):
            break
        c = new

    candidates = []
    for cand in (start, best_c):
        idx = assign(x, cand)
        candidates.append((sse(x, cand, idx), cand, idx))
    dist, cent, idx = min(candidates, key=lambda t: t[0])
    return cent, idx, dist


def _random_start(distinct, k, seed, init):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & _U64, init]))
    m = min(k, len(distinct))
    return rng.choice(distinct, size=m, replace=False)


def _pad(centroids, k):
    c = np.asarray(centroids, dtype=np.float32)
    if len(c) == k:
        return c
    return np.concatenate([c, np.full(k - len(c), c[-1], dtype=np.float32)])


def kmeans_encode(values, cfg: QuantizerConfig, seed: int = 0) -> ClusterResult:
    return kmeans_cluster(values, cfg.levels, seed)


def kmeans_cluster(values, k: int, seed: int = 0) -> ClusterResult:
    """Best of the multi-start runs for an arbitrary cluster count ``k >= 1``."""
    x = np.asarray(values, dtype=np.float32).reshape(-1)
    if x.size == 0:
        raise EmptyInput("cannot cluster an empty sequence")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("clustering input contains NaN/Inf")
    if k < 1:
        raise ValueError("need at least one cluster")
    distinct = np.unique(x)

    starts = [_random_start(distinct, k, seed, i) for i in range(RANDOM_INITS)]
    grid = fit_grid(x, k) if k > 1 else QuantGrid(float(x[0]), 0.0)
    starts.append(grid.levels(k) if grid.step else np.array([grid.offset], dtype=np.float32))

    best = None
    for i, start in enumerate(starts):
        c, ind, dist = lloyd(x, start)
        if best is None or dist < best.distortion:
            best = ClusterResult(_pad(c, k), ind.astype(np.uint16), dist, i)
        if best.distortion == 0.0:
            break  # later starts could only tie, and ties keep the earlier one
    return best


def codebook_decode(indices, centroids) -> np.ndarray:
    c = np.asarray(centroids, dtype=np.float32)
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= len(c)):
        raise IndexOutOfRange(f"code book index outside [0, {len(c)})")
    return c[idx.astype(np.int64)]
