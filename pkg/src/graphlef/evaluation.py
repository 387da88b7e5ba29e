"""Leave-one-outlier-in ROC-AUC evaluation.

Each outlier of a dataset is scored together with all inliers (one trial
per outlier).  For every trial and every ``k`` the single-outlier AUC is
computed; per trial the maximum and the mean over ``k`` are taken and then
averaged over the trials of a dataset.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_n_jobs
from .dataset import make_outlier_trials
from .knn import neighbors_from_sq_distances, pairwise_sq_distances
from .scores import compute_score, get_method

PAPER_K_RANGE = tuple(range(3, 101))
ROAD_K_VALUES = (5, 15, 40, 60, 80, 100)


def auc_single_outlier(scores, outlier_index):
    """Fraction of inliers the outlier outscores, ties counted as one half.

    ``scores`` is a :class:`~graphlef.scores.ScoreResult`; inlierness scores
    are negated first.  Ties are exact float equality.
    """
    f = np.asarray(scores.outlierness(), dtype=np.float64)
    M = f.shape[0]
    if not 0 <= outlier_index < M:
        raise IndexError(f"outlier_index {outlier_index} out of range for {M} points")
    if M < 2:
        raise ValueError("need at least one inlier")
    fo = f[outlier_index]
    others = np.delete(f, outlier_index)
    wins = np.count_nonzero(fo > others)
    ties = np.count_nonzero(fo == others)
    return (wins + 0.5 * ties) / others.shape[0]


@dataclass
class AucCurve:
    trial: str
    method: str
    k: np.ndarray
    auc: np.ndarray
    errors: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.k)


def _trial_sq_distances(trial, full_sq_dist, n_jobs):
    if full_sq_dist is None:
        return pairwise_sq_distances(trial.features, n_jobs=n_jobs)
    return full_sq_dist[np.ix_(trial.rows, trial.rows)]


def sweep_k(trial, method, k_values, n_jobs=1, sq_dist=None):
    """AUC of ``method`` on ``trial`` for every ``k`` in ``k_values``.

    The neighbor index is built once for the largest feasible ``k`` and
    truncated; the similarity graph and the score are rebuilt for each
    ``k``.  ``sq_dist`` may supply the squared-distance matrix of the
    trial's source dataset so it is not recomputed per trial.  Infeasible
    values of ``k`` are reported in ``errors`` and skipped.
    """
    m = get_method(method)
    ks = [int(k) for k in k_values]
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError(f"k values must be strictly increasing, got {ks}")
    M = trial.n_samples
    errors = {}
    feasible = []
    for k in ks:
        if k > M - 1:
            errors[k] = f"k={k} exceeds M-1={M - 1}"
        elif k < m.min_k:
            errors[k] = f"{m.name} needs k >= {m.min_k}"
        else:
            feasible.append(k)

    out_k, out_auc = [], []
    if feasible:
        D2 = _trial_sq_distances(trial, sq_dist, n_jobs)
        full = neighbors_from_sq_distances(D2, max(feasible))
        for k in feasible:
            index = full.truncate(k)
            try:
                res = compute_score(m.name, index, features=trial.features, sq_dist=D2)
            except (ValueError, ArithmeticError) as exc:
                errors[k] = str(exc)
                continue
            out_k.append(k)
            out_auc.append(auc_single_outlier(res, trial.outlier_index))
    return AucCurve(trial.source, m.name, np.array(out_k, dtype=int), np.array(out_auc), errors)


@dataclass
class DatasetAggregate:
    auc_max: float
    auc_avg: float
    auc_max_std: float
    auc_avg_std: float
    per_trial_max: np.ndarray
    per_trial_avg: np.ndarray


def aggregate_dataset(curves):
    """Mean over trials of the per-trial max and mean AUC over ``k``.

    Standard deviations are population standard deviations across trials.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to aggregate")
    if any(len(c) == 0 for c in curves):
        raise ValueError("cannot aggregate an empty curve")
    mx = np.array([c.auc.max() for c in curves])
    avg = np.array([c.auc.mean() for c in curves])
    return DatasetAggregate(
        auc_max=float(mx.mean()),
        auc_avg=float(avg.mean()),
        auc_max_std=float(mx.std()),
        auc_avg_std=float(avg.std()),
        per_trial_max=mx,
        per_trial_avg=avg,
    )


@dataclass
class ReportCell:
    dataset: str
    method: str
    curves: list
    aggregate: DatasetAggregate | None = None
    error: str | None = None

    def mean_curve(self):
        """``(k, mean AUC over trials)`` for the k values every trial produced."""
        if not self.curves:
            return np.array([], dtype=int), np.array([])
        common = set(self.curves[0].k.tolist())
        for c in self.curves[1:]:
            common &= set(c.k.tolist())
        ks = np.array(sorted(common), dtype=int)
        rows = [c.auc[np.searchsorted(c.k, ks)] for c in self.curves]
        return ks, np.mean(rows, axis=0) if rows else np.array([])


@dataclass
class EvalReport:
    cells: list = field(default_factory=list)

    def __len__(self):
        return len(self.cells)

    def cell(self, dataset, method):
        for c in self.cells:
            if c.dataset == dataset and c.method == method:
                return c
        raise KeyError((dataset, method))

    def merged(self, other):
        cells = sorted(self.cells + other.cells, key=lambda c: (c.method, c.dataset))
        return EvalReport(cells)


def _map(fn, items, n_jobs):
    if n_jobs == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def compare_methods(dataset, methods, k_values, n_jobs=1):
    """Sweep every method over every one-outlier trial of ``dataset``.

    A failure in one (dataset, method) cell is recorded on that cell and
    does not affect the others.
    """
    n_jobs = check_n_jobs(n_jobs)
    methods = [get_method(m).name for m in methods]
    if not methods:
        return EvalReport([])
    trials = make_outlier_trials(dataset)
    if not trials:
        raise ValueError(f"dataset {dataset.name!r} has no outliers to evaluate")
    D2 = pairwise_sq_distances(dataset.features, n_jobs=n_jobs)

    work = [(m, t) for m in methods for t in trials]
    curves = _map(lambda mt: sweep_k(mt[1], mt[0], k_values, sq_dist=D2), work, n_jobs)

    cells = []
    for mi, m in enumerate(methods):
        cc = curves[mi * len(trials) : (mi + 1) * len(trials)]
        cell = ReportCell(dataset.name, m, cc)
        try:
            cell.aggregate = aggregate_dataset(cc)
        except ValueError:
            msgs = sorted({msg for c in cc for msg in c.errors.values()})
            cell.error = "; ".join(msgs) or "no AUC values"
        cells.append(cell)
    cells.sort(key=lambda c: (c.method, c.dataset))
    return EvalReport(cells)


# -- export -----------------------------------------------------------------

REPORT_COLUMNS = ("dataset", "method", "auc_max", "auc_max_std", "auc_avg", "auc_avg_std")


def _report_rows(report):
    for c in report.cells:
        a = c.aggregate
        vals = (
            [a.auc_max, a.auc_max_std, a.auc_avg, a.auc_avg_std] if a else [float("nan")] * 4
        )
        yield c, vals


def report_to_csv(report, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for c, vals in _report_rows(report):
        w.writerow([c.dataset, c.method] + [repr(float(v)) for v in vals])
    text = buf.getvalue()
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return None


def report_to_json(report, path=None):
    doc = []
    for c, vals in _report_rows(report):
        entry = dict(zip(REPORT_COLUMNS, [c.dataset, c.method] + [float(v) for v in vals]))
        entry["n_trials"] = len(c.curves)
        entry["error"] = c.error
        entry["curves"] = [
            {
                "trial": cv.trial,
                "k": cv.k.tolist(),
                "auc": cv.auc.tolist(),
                "errors": {str(k): v for k, v in cv.errors.items()},
            }
            for cv in c.curves
        ]
        doc.append(entry)
    text = json.dumps(doc, indent=2, allow_nan=True)
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return None


def read_report_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in REPORT_COLUMNS[2:]:
            r[key] = float(r[key])
    return rows


def plot_data(cell):
    """Whitespace-separated ``k auc`` lines (AUC averaged over trials), no header."""
    ks, auc = cell.mean_curve()
    return "".join(f"{k} {a!r}\n" for k, a in zip(ks.tolist(), auc.tolist()))


def write_plot_data(report, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in report.cells:
        p = out_dir / f"{c.dataset}_{c.method}.dat"
        p.write_text(plot_data(c), encoding="utf-8")
        paths.append(p)
    return paths


def read_plot_data(path):
    data = np.loadtxt(path, ndmin=2)
    return data[:, 0].astype(int), data[:, 1]
