"""Exact brute-force k-nearest-neighbor search under the Euclidean metric."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import check_features, check_n_jobs

_CHUNK_ELEMENTS = 1 << 22


def _sq_euclidean(A, B):
    return cdist(A, B, metric="sqeuclidean")


# single seam for the dissimilarity; only Euclidean is supported
_METRICS = {"euclidean": _sq_euclidean}


def dissimilarity(a, b):
    """Euclidean distance between two feature vectors.

    Uses the same kernel as :func:`build_neighbor_index`, so values agree
    bit for bit with the stored neighbor distances.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("vectors must be finite")
    return math.sqrt(_sq_euclidean(a[None, :], b[None, :])[0, 0])


@dataclass(frozen=True)
class NeighborIndex:
    """Per-point k nearest neighbors, sorted by distance then by index.

    Attributes
    ----------
    neighbors : ndarray of shape (M, k), int
    distances : ndarray of shape (M, k)
        Euclidean distances, ascending per row.
    sq_distances : ndarray of shape (M, k)
        Squared distances the ``distances`` were derived from.
    """

    neighbors: np.ndarray
    distances: np.ndarray
    sq_distances: np.ndarray

    def __post_init__(self):
        for name in ("neighbors", "distances", "sq_distances"):
            getattr(self, name).setflags(write=False)

    @property
    def k(self):
        return self.neighbors.shape[1]

    @property
    def n_samples(self):
        return self.neighbors.shape[0]

    def truncate(self, k):
        """Index for a smaller ``k``; identical to rebuilding from scratch."""
        if not 1 <= k <= self.k:
            raise ValueError(f"k must be in [1, {self.k}], got {k}")
        return NeighborIndex(
            self.neighbors[:, :k].copy(),
            self.distances[:, :k].copy(),
            self.sq_distances[:, :k].copy(),
        )

    def reverse_counts(self):
        """Number of points listing each point as a neighbor."""
        return np.bincount(self.neighbors.ravel(), minlength=self.n_samples)


def _row_chunks(M, cols, n_jobs):
    step = max(1, min(M, _CHUNK_ELEMENTS // max(cols, 1)))
    if n_jobs > 1:
        step = max(1, min(step, -(-M // n_jobs)))
    return [(s, min(M, s + step)) for s in range(0, M, step)]


def _map_chunks(fn, chunks, n_jobs):
    if n_jobs == 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, chunks))


def pairwise_sq_distances(X, metric="euclidean", n_jobs=1):
    """Full M x M matrix of squared distances.

    Every entry is computed independently, so chunking and thread count do
    not change a single bit of the result.
    """
    X = check_features(X)
    try:
        kernel = _METRICS[metric]
    except KeyError:
        raise ValueError(f"unsupported metric {metric!r}") from None
    n_jobs = check_n_jobs(n_jobs)
    M, N = X.shape
    chunks = _row_chunks(M, M * N, n_jobs)
    parts = _map_chunks(lambda c: kernel(X[c[0] : c[1]], X), chunks, n_jobs)
    return np.vstack(parts)


def neighbors_from_sq_distances(sq_dist, k, n_jobs=1):
    """Select the k nearest neighbors from a precomputed squared-distance matrix."""
    sq_dist = np.asarray(sq_dist, dtype=np.float64)
    M = sq_dist.shape[0]
    if sq_dist.shape != (M, M):
        raise ValueError(f"distance matrix must be square, got {sq_dist.shape}")
    k = int(k)
    if not 1 <= k <= M - 1:
        raise ValueError(f"k must satisfy 1 <= k <= M-1; got k={k}, M={M}")
    n_jobs = check_n_jobs(n_jobs)

    def select(chunk):
        lo, hi = chunk
        block = sq_dist[lo:hi].copy()
        block[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        # stable sort keeps ascending index among equal distances
        order = np.argsort(block, axis=1, kind="stable")[:, :k]
        return order, np.take_along_axis(block, order, axis=1)

    parts = _map_chunks(select, _row_chunks(M, M, n_jobs), n_jobs)
    neighbors = np.vstack([p[0] for p in parts]).astype(np.intp)
    sq = np.vstack([p[1] for p in parts])
    return NeighborIndex(neighbors, np.sqrt(sq), sq)


def build_neighbor_index(X, k, metric="euclidean", n_jobs=1):
    """Exact kNN of every row of ``X`` (self excluded).

    Raises
    ------
    ValueError
        If ``k`` is not in ``[1, M - 1]``.
    """
    X = check_features(X)
    M = X.shape[0]
    if not 1 <= int(k) <= M - 1:
        raise ValueError(f"k must satisfy 1 <= k <= M-1; got k={k}, M={M}")
    return neighbors_from_sq_distances(
        pairwise_sq_distances(X, metric=metric, n_jobs=n_jobs), k, n_jobs=n_jobs
    )
