"""Outlier and inlier scores on kNN graphs.

Graph scores
    ``uslef``/``ulef`` (local entropy factor on normalized UMAP weights,
    sparse/non-sparse), ``tslef``/``tlef`` (same on Barnes-Hut-SNE weights),
    ``usos`` and ``knnsos`` (product of ``1 - w`` over in-edges).
Baselines
    ``knn``, ``knnw``, ``odin``, ``lof``, ``ldof``.

Every score keeps its natural direction; :class:`ScoreResult.orientation`
tells the evaluator which way is "more outlying".
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .similarity import (
    BH_SNE,
    NONSPARSE,
    SPARSE,
    UMAP,
    build_bh_sne_graph,
    build_umap_graph,
    neighbor_incoming_weights,
    normalize_umap_weights,
)

HIGHER_IS_OUTLIER = "higher_is_outlier"
HIGHER_IS_INLIER = "higher_is_inlier"


@dataclass(frozen=True)
class ScoreResult:
    values: np.ndarray
    orientation: str
    method: str
    k: int

    def outlierness(self):
        """Values flipped, if needed, so that larger means more outlying."""
        if self.orientation == HIGHER_IS_INLIER:
            return -self.values
        return self.values


def _check_index(graph, index):
    if not np.array_equal(graph.neighbors, index.neighbors):
        raise ValueError("graph was not built from this neighbor index")


def _edge_lookup(neighbors):
    """Sorted edge keys ``src * M + dst`` and the flat positions they came from."""
    M, k = neighbors.shape
    keys = (np.arange(M)[:, None] * M + neighbors).ravel()
    order = np.argsort(keys, kind="stable")
    return keys[order], order


def reverse_edge_mask(index):
    """``mask[i, c]`` is True when ``i`` is among the neighbors of ``neighbors[i, c]``.

    Also returns, for those entries, the flat position of the edge
    ``neighbors[i, c] -> i`` in the row-major ``(M, k)`` layout.
    """
    nb = index.neighbors
    M = nb.shape[0]
    keys, order = _edge_lookup(nb)
    query = (nb * M + np.arange(M)[:, None]).ravel()
    pos = np.searchsorted(keys, query)
    pos = np.minimum(pos, keys.size - 1)
    hit = keys[pos] == query
    return hit.reshape(nb.shape), np.where(hit, order[pos], -1).reshape(nb.shape)


def _lef_from_weights(w, k):
    """Incoming mass over k times the entropy (bits) of the normalized weights."""
    S = w.sum(axis=1)
    safe_S = np.where(S > 0.0, S, 1.0)
    p = w / safe_S[:, None]
    logp = np.log2(np.where(p > 0.0, p, 1.0))
    H = -(p * logp).sum(axis=1)
    return np.where(S > 0.0, S / k * H, 0.0)


def score_lef(graph, index, mode=SPARSE):
    """Local entropy factor, an inlierness score.

    For each point ``i`` the incoming weights ``w_j`` from its neighbors
    ``j`` are collected.  In ``sparse`` mode only neighbors that actually
    link back to ``i`` contribute; in ``nonsparse`` mode every neighbor
    contributes, with its kernel extended to ``i`` when needed.  With
    ``S = sum(w)`` and ``p = w / S`` the score is ``S / k * H(p)`` with
    ``H`` in bits, and 0 when ``S == 0``.

    Normalized UMAP graphs give ``uslef``/``ulef``; Barnes-Hut-SNE graphs give
    ``tslef``/``tlef``.
    """
    _check_index(graph, index)
    if graph.kind == UMAP and not graph.normalized:
        raise ValueError("LEF on a UMAP graph needs normalize_umap_weights() first")
    if mode not in (SPARSE, NONSPARSE):
        raise ValueError(f"mode must be {SPARSE!r} or {NONSPARSE!r}, got {mode!r}")

    if mode == NONSPARSE:
        w = neighbor_incoming_weights(graph, index)
    else:
        mask, pos = reverse_edge_mask(index)
        w = np.where(mask, graph.weights.ravel()[np.maximum(pos, 0)], 0.0)

    prefix = "u" if graph.kind == UMAP else "t"
    method = prefix + ("slef" if mode == SPARSE else "lef")
    return ScoreResult(_lef_from_weights(w, graph.k), HIGHER_IS_INLIER, method, graph.k)


def _sos_product(graph):
    M = graph.n_samples
    src, dst, w = graph.triples()
    order = np.lexsort((src, dst))
    values = np.ones(M)
    np.multiply.at(values, dst[order], 1.0 - w[order])
    return values


def score_knnsos(graph):
    """Product of ``1 - P[j, i]`` over the Barnes-Hut-SNE in-edges of ``i``."""
    if graph.kind != BH_SNE:
        raise ValueError(f"knnsos needs a bh_sne graph, got {graph.kind}")
    return ScoreResult(_sos_product(graph), HIGHER_IS_OUTLIER, "knnsos", graph.k)


def score_usos(graph):
    """KNNSOS on normalized UMAP weights.

    Not rescaled by in-degree: a point with ``r`` in-edges can go as low as
    ``(1 - 1/log2(k)) ** r``, so more in-edges means less outlying.
    """
    if graph.kind != UMAP:
        raise ValueError(f"usos needs a umap graph, got {graph.kind}")
    if not graph.normalized:
        raise ValueError(
            "usos needs normalized umap weights; raw nearest-neighbor weights of 1 "
            "would force a zero score"
        )
    return ScoreResult(_sos_product(graph), HIGHER_IS_OUTLIER, "usos", graph.k)


def score_knn(index):
    return ScoreResult(
        index.distances[:, -1].copy(), HIGHER_IS_OUTLIER, "knn", index.k
    )


def score_knnw(index):
    return ScoreResult(index.distances.sum(axis=1), HIGHER_IS_OUTLIER, "knnw", index.k)


def score_odin(index):
    """In-degree of each point in the kNN graph."""
    counts = index.reverse_counts().astype(np.float64)
    return ScoreResult(counts, HIGHER_IS_INLIER, "odin", index.k)


def _degenerate_scale(index):
    scale = float(index.distances.max()) if index.distances.size else 0.0
    return np.finfo(np.float64).eps * (scale if scale > 0.0 else 1.0)


def score_lof(index):
    """Local outlier factor over exactly the k listed neighbors.

    A point whose mean reachability distance is 0 gets a large finite
    density instead of infinity.
    """
    nb, d = index.neighbors, index.distances
    kdist = d[:, -1]
    reach = np.maximum(d, kdist[nb])
    mean_reach = reach.mean(axis=1)
    mean_reach = np.where(mean_reach > 0.0, mean_reach, _degenerate_scale(index))
    lrd = 1.0 / mean_reach
    lof = lrd[nb].mean(axis=1) / lrd
    return ScoreResult(lof, HIGHER_IS_OUTLIER, "lof", index.k)


def score_ldof(index, features, sq_dist=None):
    """Mean distance to the neighbors over the mean distance among them.

    ``sq_dist`` may pass a precomputed full squared-distance matrix.
    """
    k = index.k
    if k < 2:
        raise ValueError("ldof needs k >= 2")
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] != index.n_samples:
        raise ValueError("features do not match the neighbor index")
    nb = index.neighbors
    inner = np.empty(index.n_samples)
    for i in range(index.n_samples):
        if sq_dist is not None:
            block = sq_dist[np.ix_(nb[i], nb[i])]
        else:
            block = cdist(X[nb[i]], X[nb[i]], metric="sqeuclidean")
        # diagonal is exactly 0, so the full sum covers the k(k-1) ordered pairs
        inner[i] = np.sqrt(block).sum() / (k * (k - 1))
    inner = np.where(inner > 0.0, inner, _degenerate_scale(index))
    return ScoreResult(index.distances.mean(axis=1) / inner, HIGHER_IS_OUTLIER, "ldof", k)


# -- registry ---------------------------------------------------------------


def _umap_graph(index, n_jobs):
    return normalize_umap_weights(build_umap_graph(index, n_jobs=n_jobs))


def _run_ulef(index, n_jobs=1, **_):
    return score_lef(_umap_graph(index, n_jobs), index, NONSPARSE)


def _run_uslef(index, n_jobs=1, **_):
    return score_lef(_umap_graph(index, n_jobs), index, SPARSE)


def _run_usos(index, n_jobs=1, **_):
    return score_usos(_umap_graph(index, n_jobs))


def _run_tlef(index, n_jobs=1, **_):
    return score_lef(build_bh_sne_graph(index, n_jobs=n_jobs), index, NONSPARSE)


def _run_tslef(index, n_jobs=1, **_):
    return score_lef(build_bh_sne_graph(index, n_jobs=n_jobs), index, SPARSE)


def _run_knnsos(index, n_jobs=1, **_):
    return score_knnsos(build_bh_sne_graph(index, n_jobs=n_jobs))


def _run_ldof(index, features=None, sq_dist=None, **_):
    if features is None:
        raise ValueError("ldof needs the feature matrix")
    return score_ldof(index, features, sq_dist)


@dataclass(frozen=True)
class Method:
    name: str
    min_k: int
    run: object


METHODS = {
    m.name: m
    for m in [
        Method("ulef", 2, _run_ulef),
        Method("uslef", 2, _run_uslef),
        Method("usos", 2, _run_usos),
        Method("tlef", 3, _run_tlef),
        Method("tslef", 3, _run_tslef),
        Method("knnsos", 3, _run_knnsos),
        Method("knn", 1, lambda index, **_: score_knn(index)),
        Method("knnw", 1, lambda index, **_: score_knnw(index)),
        Method("odin", 1, lambda index, **_: score_odin(index)),
        Method("lof", 1, lambda index, **_: score_lof(index)),
        Method("ldof", 2, _run_ldof),
    ]
}


def get_method(name):
    try:
        return METHODS[name.lower()]
    except KeyError:
        raise KeyError(
            f"unknown method {name!r}; registered methods: {', '.join(METHODS)}"
        ) from None


def compute_score(method, index, features=None, sq_dist=None, n_jobs=1):
    """Run a registered method on a prebuilt neighbor index."""
    m = get_method(method)
    if index.k < m.min_k:
        raise ValueError(f"{m.name} needs k >= {m.min_k}, got k={index.k}")
    return m.run(index, features=features, sq_dist=sq_dist, n_jobs=n_jobs)


# -- export -----------------------------------------------------------------

SCORE_COLUMNS = ("point_id", "score", "orientation", "method", "k")


def scores_to_csv(result, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_COLUMNS)
    for i, v in enumerate(result.values.tolist()):
        w.writerow([i, repr(v), result.orientation, result.method, result.k])
    text = buf.getvalue()
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return None


def read_scores_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no scores")
    ids = [int(r["point_id"]) for r in rows]
    if ids != list(range(len(rows))):
        raise ValueError(f"{path}: point ids are not 0..M-1 in order")
    return ScoreResult(
        np.array([float(r["score"]) for r in rows]),
        rows[0]["orientation"],
        rows[0]["method"],
        int(rows[0]["k"]),
    )


def usos_lower_bound(in_degree, k):
    """Smallest reachable USOS for a point with ``in_degree`` in-edges."""
    return (1.0 - 1.0 / math.log2(k)) ** np.asarray(in_degree)
