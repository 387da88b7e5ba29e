"""Input checks shared by the functional API and the estimators."""

import numpy as np
from sklearn.utils import check_array


def check_features(X, min_samples=2):
    return check_array(
        X,
        dtype=np.float64,
        ensure_2d=True,
        ensure_min_samples=min_samples,
        ensure_all_finite=True,
    )


def check_n_jobs(n_jobs):
    if n_jobs is None:
        return 1
    n_jobs = int(n_jobs)
    if n_jobs < 1:
        raise ValueError(f"n_jobs must be a positive integer, got {n_jobs}")
    return n_jobs


def check_k(k, n_samples, minimum=1):
    k = int(k)
    if not minimum <= k <= n_samples - 1:
        raise ValueError(
            f"k must satisfy {minimum} <= k <= M-1; got k={k}, M={n_samples}"
        )
    return k
