"""Directed kNN similarity graphs of Barnes-Hut-SNE and UMAP.

Both graphs keep one calibrated kernel per point:

* ``bh_sne``: ``P[i, j] = exp(-d_ij**2 / (2 sigma_i**2)) / Z_i`` over the k
  neighbors, with ``sigma_i`` chosen so that the row perplexity is ``u = k/3``.
* ``umap``: ``P[i, j] = exp(-max(0, d_ij - rho_i) / sigma_i)`` with ``rho_i``
  the nearest-neighbor distance and ``sigma_i`` chosen so that the row sums
  to ``log2(k)``.

Weights are stored row-aligned with the neighbor index (shape ``(M, k)``);
:meth:`SimilarityGraph.to_sparse` gives the ``M x M`` matrix.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import sparse

from ._validation import check_n_jobs

BH_SNE = "bh_sne"
UMAP = "umap"

SPARSE = "sparse"
NONSPARSE = "nonsparse"

# exp() arguments are clipped here so nothing underflows into subnormals
EXP_FLOOR = -745.0

MAX_EXPANSIONS = 64
MAX_BISECTIONS = 100
UMAP_TOL = 1e-5
PERPLEXITY_RTOL = 1e-5

_ROWS_PER_CHUNK = 4096


class CalibrationError(ValueError):
    pass


# -- kernels ----------------------------------------------------------------


def _bh_sne_exponent(sq_dist, offset, sigma):
    # shifting by the nearest squared distance keeps the largest term at 0
    return -(sq_dist - offset) / (2.0 * sigma**2)


def _bh_sne_kernel(sq_dist, offset, sigma, log_norm):
    """Row-normalized Gaussian weights; arguments broadcast elementwise."""
    e = _bh_sne_exponent(sq_dist, offset, sigma)
    return np.exp(np.clip(e - log_norm, EXP_FLOOR, 0.0))


def _umap_kernel(dist, sigma, rho):
    x = np.maximum(dist - rho, 0.0) / sigma
    return np.exp(np.maximum(-x, EXP_FLOOR))


def _entropy_bits(p):
    """Shannon entropy in bits along the last axis, with 0 log 0 = 0."""
    safe = np.where(p > 0.0, p, 1.0)
    return -(p * np.log2(safe)).sum(axis=-1)


def _bh_sne_rows(sq_dist, sigma):
    """Weights plus the (offset, log_norm) pair that reproduces them."""
    offset = sq_dist.min(axis=1)
    e = _bh_sne_exponent(sq_dist, offset[:, None], sigma[:, None])
    log_norm = np.log(np.exp(np.maximum(e, EXP_FLOOR)).sum(axis=1))
    w = _bh_sne_kernel(sq_dist, offset[:, None], sigma[:, None], log_norm[:, None])
    return w, offset, log_norm


def _bh_sne_perplexity(sq_dist, sigma):
    w = _bh_sne_rows(sq_dist, sigma)[0]
    return np.exp2(_entropy_bits(w))


def _umap_row_sum(dist, rho, sigma):
    return _umap_kernel(dist, sigma[:, None], rho[:, None]).sum(axis=1)


# -- calibration ------------------------------------------------------------


def _calibrate(objective, target, tol, n_rows):
    """Vectorized per-row search for sigma with ``objective(rows, sigma) ~ target``.

    ``objective`` must be non-decreasing in sigma.  Each row follows its own
    bracket/bisect sequence, so a row's result does not depend on which other
    rows share the call.

    Returns ``(sigma, flagged)``; ``flagged`` marks rows whose target was not
    met (unreachable target, left at the search bound).
    """
    sigma = np.ones(n_rows)
    lo = np.zeros(n_rows)
    hi = np.full(n_rows, np.inf)
    done = np.zeros(n_rows, dtype=bool)
    flagged = np.zeros(n_rows, dtype=bool)
    rows = np.arange(n_rows)

    val = objective(rows, sigma)
    done |= np.abs(val - target) < tol
    too_high = val > target
    hi[too_high] = sigma[too_high]
    lo[~too_high] = sigma[~too_high]

    # expansion: halve sigma while above target, double while below
    bracketed = done.copy()
    for _ in range(MAX_EXPANSIONS):
        act = np.flatnonzero(~bracketed)
        if act.size == 0:
            break
        down = too_high[act]
        trial = np.where(down, sigma[act] * 0.5, sigma[act] * 2.0)
        v = objective(act, trial)
        sigma[act] = trial
        above = v > target[act]
        hi[act[above]] = trial[above]
        lo[act[~above]] = trial[~above]
        hit = np.abs(v - target[act]) < tol[act]
        done[act[hit]] = True
        bracketed[act[hit | (down != above)]] = True

    unbracketed = ~bracketed
    flagged |= unbracketed
    done |= unbracketed

    for _ in range(MAX_BISECTIONS):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        mid = 0.5 * (lo[act] + hi[act])
        v = objective(act, mid)
        sigma[act] = mid
        hit = np.abs(v - target[act]) < tol[act]
        done[act[hit]] = True
        above = v > target[act]
        hi[act[above]] = mid[above]
        lo[act[~above]] = mid[~above]

    flagged |= ~done
    return sigma, flagged


def _check_perplexity(u, k):
    if not (1.0 <= u <= k):
        raise CalibrationError(f"perplexity must lie in [1, k={k}], got {u}")


def _calibrate_bh_sne(sq_dist, u):
    n, k = sq_dist.shape
    target = np.full(n, float(u))
    tol = np.full(n, PERPLEXITY_RTOL * float(u))

    def objective(rows, sigma):
        return _bh_sne_perplexity(sq_dist[rows], sigma)

    sigma, flagged = _calibrate(objective, target, tol, n)
    weights, offset, log_norm = _bh_sne_rows(sq_dist, sigma)
    return sigma, weights, offset, log_norm, flagged


def _calibrate_umap(dist):
    n, k = dist.shape
    rho = dist[:, 0].copy()
    target = np.full(n, math.log2(k))
    tol = np.full(n, UMAP_TOL)

    def objective(rows, sigma):
        return _umap_row_sum(dist[rows], rho[rows], sigma)

    sigma, flagged = _calibrate(objective, target, tol, n)
    weights = _umap_kernel(dist, sigma[:, None], rho[:, None])
    return rho, sigma, weights, flagged


def calibrate_bh_sne_row(squared_distances, u):
    """Calibrate one Barnes-Hut-SNE row to perplexity ``u``.

    Returns ``(sigma, weights, flagged)``.  ``flagged`` is True when the
    target could not be met (e.g. all distances equal) and sigma was left at
    the search bound.
    """
    d2 = np.asarray(squared_distances, dtype=np.float64).ravel()
    k = d2.shape[0]
    if k < 2:
        raise CalibrationError(f"need at least 2 neighbors, got {k}")
    if np.any(d2 < 0) or not np.all(np.isfinite(d2)):
        raise CalibrationError("squared distances must be finite and non-negative")
    if not np.any(d2 > 0):
        raise CalibrationError("need at least one strictly positive squared distance")
    _check_perplexity(u, k)
    sigma, weights, _, _, flagged = _calibrate_bh_sne(d2[None, :], u)
    return float(sigma[0]), weights[0], bool(flagged[0])


def calibrate_umap_row(distances, k=None):
    """Calibrate one UMAP row so that its weights sum to ``log2(k)``.

    Returns ``(rho, sigma, weights, flagged)``.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    k = d.shape[0] if k is None else int(k)
    if k != d.shape[0]:
        raise CalibrationError(f"k={k} but {d.shape[0]} distances given")
    if k < 2:
        raise CalibrationError(f"need at least 2 neighbors, got {k}")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise CalibrationError("distances must be finite and non-negative")
    if np.any(np.diff(d) < 0):
        raise CalibrationError("distances must be sorted ascending")
    rho, sigma, weights, flagged = _calibrate_umap(d[None, :])
    return float(rho[0]), float(sigma[0]), weights[0], bool(flagged[0])


# -- graphs -----------------------------------------------------------------


@dataclass(frozen=True)
class SimilarityGraph:
    """Directed kNN graph with per-point calibration values.

    ``weights[i, c]`` is the edge ``i -> neighbors[i, c]``.  ``flagged``
    marks rows whose calibration target was unreachable.

    For ``bh_sne`` the row kernel is reproduced from ``sigma``, ``offset``
    (nearest squared distance) and ``log_norm`` (log of the shifted
    neighbor-only normalizer)::

        w = exp(-(d**2 - offset) / (2 sigma**2) - log_norm)
    """

    kind: str
    neighbors: np.ndarray
    weights: np.ndarray
    sigma: np.ndarray
    flagged: np.ndarray
    rho: np.ndarray | None = None
    offset: np.ndarray | None = None
    log_norm: np.ndarray | None = None
    perplexity: float | None = None
    normalized: bool = False

    @property
    def k(self):
        return self.neighbors.shape[1]

    @property
    def n_samples(self):
        return self.neighbors.shape[0]

    def row_sums(self):
        return self.weights.sum(axis=1)

    def to_sparse(self):
        M, k = self.neighbors.shape
        rows = np.repeat(np.arange(M), k)
        return sparse.csr_matrix(
            (self.weights.ravel(), (rows, self.neighbors.ravel())), shape=(M, M)
        )

    def triples(self):
        """``(i, j, weight)`` for every stored edge, row-major."""
        M, k = self.neighbors.shape
        return np.repeat(np.arange(M), k), self.neighbors.ravel(), self.weights.ravel()


def _run_chunks(fn, n, n_jobs):
    chunks = [(s, min(n, s + _ROWS_PER_CHUNK)) for s in range(0, n, _ROWS_PER_CHUNK)]
    if n_jobs > 1 and n > 1:
        step = max(1, -(-n // n_jobs))
        chunks = [(s, min(n, s + step)) for s in range(0, n, step)]
    if n_jobs == 1 or len(chunks) == 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(fn, chunks))
    return [np.concatenate(p) for p in zip(*parts)]


def build_bh_sne_graph(index, perplexity=None, n_jobs=1):
    """Barnes-Hut-SNE affinities, perplexity ``k/3`` unless given."""
    k = index.k
    if k < 3 and perplexity is None:
        raise CalibrationError(f"bh_sne graph needs k >= 3 (perplexity k/3 >= 1), got k={k}")
    u = k / 3.0 if perplexity is None else float(perplexity)
    _check_perplexity(u, k)
    n_jobs = check_n_jobs(n_jobs)
    sigma, weights, offset, log_norm, flagged = _run_chunks(
        lambda c: _calibrate_bh_sne(index.sq_distances[c[0] : c[1]], u),
        index.n_samples,
        n_jobs,
    )
    return SimilarityGraph(
        kind=BH_SNE,
        neighbors=index.neighbors,
        weights=weights,
        sigma=sigma,
        flagged=flagged,
        offset=offset,
        log_norm=log_norm,
        perplexity=u,
    )


def build_umap_graph(index, n_jobs=1):
    """UMAP affinities: nearest neighbor at 1, rows summing to ``log2(k)``."""
    if index.k < 2:
        raise CalibrationError(f"umap graph needs k >= 2, got k={index.k}")
    n_jobs = check_n_jobs(n_jobs)
    rho, sigma, weights, flagged = _run_chunks(
        lambda c: _calibrate_umap(index.distances[c[0] : c[1]]),
        index.n_samples,
        n_jobs,
    )
    return SimilarityGraph(
        kind=UMAP,
        neighbors=index.neighbors,
        weights=weights,
        sigma=sigma,
        flagged=flagged,
        rho=rho,
    )


def normalize_umap_weights(graph):
    """Divide UMAP weights by ``log2(k)`` so calibrated rows sum to one."""
    if graph.kind != UMAP:
        raise ValueError(f"expected a umap graph, got {graph.kind}")
    if graph.normalized:
        return graph
    return replace(graph, weights=graph.weights / math.log2(graph.k), normalized=True)


# -- incoming similarities --------------------------------------------------


@dataclass(frozen=True)
class IncomingView:
    """Per-point incoming edges: ``sources[i]`` and matching ``weights[i]``."""

    mode: str
    sources: list
    weights: list

    def __len__(self):
        return len(self.sources)


def _check_graph_index(graph, index):
    if graph.neighbors.shape != index.neighbors.shape or not np.array_equal(
        graph.neighbors, index.neighbors
    ):
        raise ValueError("graph was not built from this neighbor index")


def neighbor_incoming_weights(graph, index):
    """Weight each neighbor j of i would give to i under j's own kernel.

    Returns an ``(M, k)`` array aligned with ``index.neighbors``.  Where
    ``i`` is one of j's neighbors this reproduces the stored edge weight;
    elsewhere it extends j's kernel beyond its neighborhood.  For
    Barnes-Hut-SNE the neighbor-only normalizer of j is reused.
    """
    _check_graph_index(graph, index)
    nb = index.neighbors
    if graph.kind == BH_SNE:
        if graph.log_norm is None:
            raise ValueError("bh_sne graph lacks stored normalizers")
        return _bh_sne_kernel(
            index.sq_distances, graph.offset[nb], graph.sigma[nb], graph.log_norm[nb]
        )
    if graph.rho is None:
        raise ValueError("umap graph lacks stored rho")
    w = _umap_kernel(index.distances, graph.sigma[nb], graph.rho[nb])
    if graph.normalized:
        w = w / math.log2(graph.k)
    return w


def incoming_view(graph, index, mode=SPARSE):
    """Incoming similarities of every point.

    ``sparse``: the actual in-edges (transpose of the graph), sources in
    ascending order.  ``nonsparse``: one entry per neighbor ``j`` of ``i``,
    evaluated with j's calibrated kernel even when ``i`` is not among j's
    neighbors.
    """
    _check_graph_index(graph, index)
    M = graph.n_samples
    if mode == SPARSE:
        T = graph.to_sparse().T.tocsr()
        T.sort_indices()
        return IncomingView(
            SPARSE,
            [T.indices[T.indptr[i] : T.indptr[i + 1]].copy() for i in range(M)],
            [T.data[T.indptr[i] : T.indptr[i + 1]].copy() for i in range(M)],
        )
    if mode == NONSPARSE:
        w = neighbor_incoming_weights(graph, index)
        return IncomingView(
            NONSPARSE, [index.neighbors[i].copy() for i in range(M)], list(w)
        )
    raise ValueError(f"mode must be {SPARSE!r} or {NONSPARSE!r}, got {mode!r}")


# -- dump -------------------------------------------------------------------


def dump_graph(graph, path, sidecar=None):
    """Write ``i j weight`` triples and a per-point calibration sidecar.

    The sidecar has columns ``i sigma rho offset log_norm flagged`` (``nan``
    where a value does not apply to the graph kind).
    """
    path = Path(path)
    sidecar = Path(sidecar) if sidecar is not None else path.with_suffix(".calib.txt")
    I, J, W = graph.triples()
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"# kind={graph.kind} k={graph.k} normalized={int(graph.normalized)}\n")
        for i, j, w in zip(I.tolist(), J.tolist(), W.tolist()):
            fh.write(f"{i} {j} {w!r}\n")
    nan = np.full(graph.n_samples, np.nan)
    rho = graph.rho if graph.rho is not None else nan
    offset = graph.offset if graph.offset is not None else nan
    log_norm = graph.log_norm if graph.log_norm is not None else nan
    with sidecar.open("w", encoding="utf-8") as fh:
        fh.write("# i sigma rho offset log_norm flagged\n")
        for i in range(graph.n_samples):
            fh.write(
                f"{i} {float(graph.sigma[i])!r} {float(rho[i])!r} "
                f"{float(offset[i])!r} {float(log_norm[i])!r} {int(graph.flagged[i])}\n"
            )
    return path, sidecar


def read_graph_dump(path):
    """Parse a triple file back into ``(header, i, j, weight)`` arrays."""
    header = {}
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    header[key] = val
                continue
            if line.strip():
                i, j, w = line.split()
                rows.append((int(i), int(j), float(w)))
    arr = np.array(rows, dtype=object).reshape(-1, 3)
    return (
        header,
        arr[:, 0].astype(np.intp),
        arr[:, 1].astype(np.intp),
        arr[:, 2].astype(np.float64),
    )


def read_calibration_sidecar(path):
    """Parse a sidecar into a dict of per-point arrays."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    return {
        "sigma": data[:, 1],
        "rho": data[:, 2],
        "offset": data[:, 3],
        "log_norm": data[:, 4],
        "flagged": data[:, 5].astype(bool),
    }
