"""Seeded k-means with greedy farthest-point repair for empty clusters.

Training runs in float64 for stable inertia accounting; returned
centroids are float32. Given the same points and config the result is
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ASSIGN_CHUNK = 8192


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    max_iters: int = 25
    rel_improvement_eps: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_improvement_eps < 0:
            raise ValueError(f"rel_improvement_eps must be >= 0, got {self.rel_improvement_eps}")


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray
    inertia: float

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


def assign_euclidean(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per point by squared distance, ties to lowest id.

    Returns (assignments, squared distances). Chunked so the distance
    matrix never materializes at full size.
    """
    pts = np.asarray(points, dtype=np.float64)
    cents = np.asarray(centroids, dtype=np.float64)
    n = pts.shape[0]
    assign = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    c_sq = (cents * cents).sum(axis=1)
    for lo in range(0, n, _ASSIGN_CHUNK):
        hi = min(lo + _ASSIGN_CHUNK, n)
        chunk = pts[lo:hi]
        d2 = (chunk * chunk).sum(axis=1)[:, None] + c_sq[None, :] - 2.0 * (chunk @ cents.T)
        np.maximum(d2, 0.0, out=d2)
        assign[lo:hi] = d2.argmin(axis=1)
        dist[lo:hi] = d2[np.arange(hi - lo), assign[lo:hi]]
    return assign, dist


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = int(rng.integers(n))
    diff = points - points[chosen[0]]
    d2 = (diff * diff).sum(axis=1)
    for i in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # All remaining mass is on duplicates of chosen points; take
            # the lowest-index point not yet chosen.
            taken = set(chosen[:i].tolist())
            pick = next(idx for idx in range(n) if idx not in taken)
        else:
            r = float(rng.random()) * total
            pick = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            pick = min(pick, n - 1)
        chosen[i] = pick
        diff = points - points[pick]
        d2 = np.minimum(d2, (diff * diff).sum(axis=1))
    return points[chosen].copy()


def _repair_empty(
    points: np.ndarray,
    centroids: np.ndarray,
    assign: np.ndarray,
    dist: np.ndarray,
    k: int,
) -> bool:
    """Re-seed empty clusters from points farthest from their centroid."""
    counts = np.bincount(assign, minlength=k)
    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        return False
    if float(dist.max()) <= 0.0:
        # Perfect fit already; extra clusters stay empty by construction.
        return False
    order = np.argsort(-dist, kind="stable")
    for slot, cluster in enumerate(empties):
        centroids[cluster] = points[order[slot]]
    return True


def kmeans(points: np.ndarray, cfg: KMeansConfig) -> Codebook:
    """Lloyd iterations from a seeded k-means++ start."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError(f"points must be 2-d, got shape {pts.shape}")
    n = pts.shape[0]
    if n < cfg.k:
        raise ValueError(f"k={cfg.k} exceeds the number of points ({n})")
    rng = np.random.default_rng(cfg.seed)
    centroids = _plus_plus_init(pts, cfg.k, rng)
    prev_inertia = np.inf
    for _ in range(cfg.max_iters):
        assign, dist = assign_euclidean(pts, centroids)
        if _repair_empty(pts, centroids, assign, dist, cfg.k):
            assign, dist = assign_euclidean(pts, centroids)
        inertia = float(dist.sum())
        if inertia == 0.0:
            break
        if np.isfinite(prev_inertia) and prev_inertia - inertia < cfg.rel_improvement_eps * prev_inertia:
            break
        prev_inertia = inertia
        sums = np.empty((cfg.k, pts.shape[1]), dtype=np.float64)
        for j in range(pts.shape[1]):
            sums[:, j] = np.bincount(assign, weights=pts[:, j], minlength=cfg.k)
        counts = np.bincount(assign, minlength=cfg.k).astype(np.float64)
        occupied = counts > 0
        centroids[occupied] = sums[occupied] / counts[occupied, None]
    assign, dist = assign_euclidean(pts, centroids)
    return Codebook(centroids.astype(np.float32), float(dist.sum()))
