"""scikit-learn compatible wrappers around the functional API."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_k, check_n_jobs
from .knn import build_neighbor_index
from .scores import HIGHER_IS_INLIER, compute_score, get_method
from .similarity import BH_SNE, UMAP, build_bh_sne_graph, build_umap_graph, normalize_umap_weights


class GraphOutlierDetector(OutlierMixin, BaseEstimator):
    """Transductive neighborhood outlier detector.

    Parameters
    ----------
    method : str, default="ulef"
        Any registered score: ulef, uslef, usos, tlef, tslef, knnsos, knn,
        knnw, odin, lof, ldof.
    n_neighbors : int, default=15
    contamination : float, default=0.1
        Share of points labeled -1 by :meth:`fit_predict`.
    n_jobs : int or None
        Worker threads for distance computation and calibration. Results do
        not depend on it.

    Attributes
    ----------
    scores_ : ScoreResult
        Raw score in its natural orientation.
    decision_scores_ : ndarray of shape (n_samples,)
        Outlierness: larger means more outlying, whatever the method.
    threshold_ : float
    labels_ : ndarray of shape (n_samples,)
        -1 for outliers, 1 for inliers.

    Examples
    --------
    >>> import numpy as np
    >>> X = np.r_[np.random.default_rng(0).normal(size=(40, 2)), [[8.0, 8.0]]]
    >>> det = GraphOutlierDetector(method="ulef", n_neighbors=10).fit(X)
    >>> int(np.argmax(det.decision_scores_))
    40
    """

    def __init__(self, method="ulef", n_neighbors=15, contamination=0.1, n_jobs=None):
        self.method = method
        self.n_neighbors = n_neighbors
        self.contamination = contamination
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_features(X)
        m = get_method(self.method)
        k = check_k(self.n_neighbors, X.shape[0], minimum=m.min_k)
        if not 0.0 < self.contamination <= 0.5:
            raise ValueError(f"contamination must be in (0, 0.5], got {self.contamination}")
        n_jobs = check_n_jobs(self.n_jobs)

        self.neighbor_index_ = build_neighbor_index(X, k, n_jobs=n_jobs)
        self.scores_ = compute_score(m.name, self.neighbor_index_, features=X, n_jobs=n_jobs)
        self.decision_scores_ = np.asarray(self.scores_.outlierness(), dtype=np.float64)
        self.threshold_ = float(
            np.percentile(self.decision_scores_, 100.0 * (1.0 - self.contamination))
        )
        self.labels_ = np.where(self.decision_scores_ > self.threshold_, -1, 1)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_

    @property
    def higher_is_inlier(self):
        check_is_fitted(self, "scores_")
        return self.scores_.orientation == HIGHER_IS_INLIER


class AffinityGraphTransformer(TransformerMixin, BaseEstimator):
    """Directed kNN affinity matrix of UMAP or Barnes-Hut-SNE.

    ``fit_transform(X)`` returns the sparse ``(M, M)`` weight matrix; row
    ``i`` holds the outgoing similarities of point ``i``.  The graph is
    defined on the training points only, so :meth:`transform` accepts
    nothing but the data seen in :meth:`fit`.
    """

    def __init__(self, kind=UMAP, n_neighbors=15, normalize=False, n_jobs=None):
        self.kind = kind
        self.n_neighbors = n_neighbors
        self.normalize = normalize
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_features(X)
        if self.kind not in (UMAP, BH_SNE):
            raise ValueError(f"kind must be {UMAP!r} or {BH_SNE!r}, got {self.kind!r}")
        k = check_k(self.n_neighbors, X.shape[0], minimum=3 if self.kind == BH_SNE else 2)
        n_jobs = check_n_jobs(self.n_jobs)
        self.neighbor_index_ = build_neighbor_index(X, k, n_jobs=n_jobs)
        if self.kind == BH_SNE:
            graph = build_bh_sne_graph(self.neighbor_index_, n_jobs=n_jobs)
        else:
            graph = build_umap_graph(self.neighbor_index_, n_jobs=n_jobs)
            if self.normalize:
                graph = normalize_umap_weights(graph)
        self.graph_ = graph
        self._fit_X = X
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "graph_")
        X = check_features(X)
        if X.shape != self._fit_X.shape or not np.array_equal(X, self._fit_X):
            raise ValueError("the affinity graph is only defined for the training data")
        return self.graph_.to_sparse()

    def fit_transform(self, X, y=None):
        return self.fit(X).graph_.to_sparse()
