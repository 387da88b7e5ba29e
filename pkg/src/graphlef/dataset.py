"""Labeled datasets, one-outlier evaluation trials and synthetic generators.

Benchmark files are plain CSV with a trailing ``inlier``/``outlier`` label
column.  An ARFF file from the usual outlier benchmark repositories can be
converted with a one-liner, for example::

    python3 -c "import sys,scipy.io.arff as a,pandas as p; d,_=a.loadarff(sys.argv[1]); \
d=p.DataFrame(d).drop(columns=['id'],errors='ignore'); \
d['outlier']=d['outlier'].str.decode('ascii').map({'yes':'outlier','no':'inlier'}); \
d.to_csv(sys.argv[2],index=False)" Glass_withoutdupl_norm.arff glass.csv
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INLIER = "inlier"
OUTLIER = "outlier"
_LABEL_TOKENS = (INLIER, OUTLIER)

RASTER_SIZE = 64
ROAD_CLASSES = ("straight_multilane", "intersection")


class DatasetError(ValueError):
    """Raised when a dataset file or array violates the dataset contract."""


class DatasetParseError(DatasetError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DuplicateRowError(DatasetError):
    def __init__(self, first, second):
        super().__init__(f"rows {first} and {second} are identical")
        self.rows = (first, second)


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with per-point inlier/outlier flags.

    ``is_outlier`` is only ever consumed by the evaluation code; scores
    never see it.  An all-outlier dataset is representable (generator
    output); :func:`load_dataset` and the evaluator reject it.
    """

    features: np.ndarray
    is_outlier: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.is_outlier, dtype=bool, copy=True).ravel()
        if X.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {X.shape}")
        M, N = X.shape
        if M < 2 or N < 1:
            raise DatasetError(f"need at least 2 rows and 1 column, got {M}x{N}")
        if y.shape[0] != M:
            raise DatasetError(f"{y.shape[0]} labels for {M} rows")
        if not np.all(np.isfinite(X)):
            bad = np.argwhere(~np.isfinite(X))[0]
            raise DatasetError(f"non-finite value at row {bad[0]}, column {bad[1]}")
        _check_duplicates(X)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "is_outlier", y)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_outliers(self):
        return int(self.is_outlier.sum())

    @property
    def n_inliers(self):
        return self.n_samples - self.n_outliers

    @property
    def labels(self):
        return [OUTLIER if o else INLIER for o in self.is_outlier]


@dataclass(frozen=True)
class OutlierTrial:
    """All inliers of a dataset plus exactly one of its outliers."""

    features: np.ndarray
    outlier_index: int
    source: str
    # positions of the trial rows in the source dataset
    rows: np.ndarray = field(repr=False)

    @property
    def n_samples(self):
        return self.features.shape[0]


def _check_duplicates(X):
    seen = {}
    # + 0.0 folds -0.0 into 0.0 so the byte keys compare by value
    for i, row in enumerate(X + 0.0):
        key = row.tobytes()
        j = seen.setdefault(key, i)
        if j != i:
            raise DuplicateRowError(j, i)


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_label(token, row):
    t = token.strip().lower()
    if t not in _LABEL_TOKENS:
        raise DatasetParseError(
            f"row {row}: label {token!r} is not one of {_LABEL_TOKENS}", row=row
        )
    return t == OUTLIER


def load_dataset(path, name=None):
    """Read a labeled CSV file.

    The last column holds ``inlier``/``outlier`` (any case); every other
    column must be numeric.  A header line is detected when the last field
    of the first line is neither a label token nor a number.

    Raises
    ------
    DatasetParseError
        On a malformed cell; ``row``/``column`` locate it (0-based data rows).
    DuplicateRowError
        When two rows carry identical features.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetParseError(f"{path}: empty file")

    last = rows[0][-1].strip()
    if last.lower() not in _LABEL_TOKENS and not _is_number(last):
        rows = rows[1:]

    n_cols = len(rows[0]) if rows else 0
    if n_cols < 2:
        raise DatasetParseError(f"{path}: need at least one feature column and a label")
    features = np.empty((len(rows), n_cols - 1))
    flags = np.empty(len(rows), dtype=bool)
    for r, cells in enumerate(rows):
        if len(cells) != n_cols:
            raise DatasetParseError(
                f"row {r}: expected {n_cols} fields, got {len(cells)}", row=r
            )
        for c, cell in enumerate(cells[:-1]):
            try:
                features[r, c] = float(cell)
            except ValueError:
                raise DatasetParseError(
                    f"row {r}, column {c}: cannot parse {cell!r} as a number",
                    row=r,
                    column=c,
                ) from None
        flags[r] = _parse_label(cells[-1], r)

    if flags.all():
        raise DatasetError(f"{path}: dataset has no inliers")
    if not flags.any():
        warnings.warn(f"{path}: dataset contains no outliers", stacklevel=2)
    return LabeledDataset(features, flags, name=name or path.stem)


def dataset_to_csv(dataset, path=None):
    """Write ``dataset`` in the format read by :func:`load_dataset`.

    Values are written with ``repr`` so a reload is exact.  Returns the CSV
    text when ``path`` is None.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"f{j}" for j in range(dataset.n_features)] + ["label"])
    for row, label in zip(dataset.features, dataset.labels):
        writer.writerow([repr(float(v)) for v in row] + [label])
    text = buf.getvalue()
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return None


def make_outlier_trials(dataset):
    """One trial per outlier: every inlier plus that outlier.

    Rows keep their original relative order, so a dataset with a single
    outlier yields one trial equal to itself.  Returns an empty list for a
    dataset without outliers.
    """
    inlier_mask = ~dataset.is_outlier
    outliers = np.flatnonzero(dataset.is_outlier)
    trials = []
    for ordinal, o in enumerate(outliers):
        keep = inlier_mask.copy()
        keep[o] = True
        rows = np.flatnonzero(keep)
        trials.append(
            OutlierTrial(
                features=dataset.features[rows],
                outlier_index=int(np.searchsorted(rows, o)),
                source=f"{dataset.name}#{ordinal}",
                rows=rows,
            )
        )
    return trials


def gen_gaussian_with_planted_outlier(m_inliers, n_dims, offset, seed=0):
    """Standard Gaussian cluster plus one point ``offset`` away along axis 0.

    The outlier sits at the sample mean of the inliers shifted by ``offset``
    along the first coordinate, so its distance to the mean is exactly
    ``offset``.  It is the last row.
    """
    if m_inliers < 5:
        raise ValueError(f"m_inliers must be >= 5, got {m_inliers}")
    if n_dims < 1:
        raise ValueError(f"n_dims must be >= 1, got {n_dims}")
    if not offset > 0:
        raise ValueError(f"offset must be > 0, got {offset}")
    rng = np.random.default_rng(seed)
    inliers = rng.standard_normal((m_inliers, n_dims))
    outlier = inliers.mean(axis=0)
    outlier[0] += offset
    X = np.vstack([inliers, outlier])
    flags = np.zeros(m_inliers + 1, dtype=bool)
    flags[-1] = True
    return LabeledDataset(X, flags, name=f"gauss_m{m_inliers}_n{n_dims}_s{seed}")


# -- road rasters -----------------------------------------------------------

_BACKGROUND, _LANE, _MARKING = 0.0, 0.5, 1.0


def _paint_arm(img, u, v, half_width, lane_width, n_lanes, ray, dash_phase):
    """Paint one road band.

    ``u`` runs along the road, ``v`` across it (pixel units).  A ray only
    covers ``u >= -half_width`` so arms can meet in a junction.
    """
    on_road = np.abs(v) <= half_width
    if ray:
        on_road &= u >= -half_width
    img[on_road & (img < _LANE)] = _LANE

    marking = np.zeros_like(on_road)
    for b in range(n_lanes + 1):
        edge = -half_width + b * lane_width
        near = np.abs(v - edge) <= 0.5
        if 0 < b < n_lanes:
            # dashed separators between lanes
            near &= np.mod(u + dash_phase, 8.0) < 4.0
        marking |= near
    marking &= on_road | (np.abs(v) <= half_width + 0.5)
    if ray:
        # keep the junction box free of lane lines
        marking &= u >= half_width
    img[marking] = _MARKING


def _road_raster(kind, rng):
    size = RASTER_SIZE
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    n_lanes = int(rng.integers(2, 5))
    lane_width = float(rng.uniform(4.0, 7.0))
    half_width = n_lanes * lane_width / 2.0
    cx = c + rng.uniform(-4.0, 4.0)
    cy = c + rng.uniform(-4.0, 4.0)
    dx, dy = xx - cx, yy - cy
    img = np.full((size, size), _BACKGROUND)
    theta = rng.uniform(0.0, np.pi)
    dash_phase = float(rng.uniform(0.0, 8.0))

    if kind == "straight_multilane":
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        _paint_arm(img, u, v, half_width, lane_width, n_lanes, False, dash_phase)
        return img

    n_arms = int(rng.integers(3, 5))
    base = rng.uniform(0.0, 2.0 * np.pi)
    spacing = 2.0 * np.pi / n_arms
    for a in range(n_arms):
        ang = base + a * spacing + rng.uniform(-0.15, 0.15) * spacing
        u = dx * np.cos(ang) + dy * np.sin(ang)
        v = -dx * np.sin(ang) + dy * np.cos(ang)
        _paint_arm(img, u, v, half_width, lane_width, n_lanes, True, dash_phase)
    return img


def gen_synthetic_road_rasters(road_class, count, seed=0):
    """Flattened 64x64 road rasters with palette {0, 0.5, 1}.

    ``straight_multilane`` rasters are labeled inlier, ``intersection``
    rasters outlier.  Lane count, lane width, rotation and position are
    drawn per image; intersections also draw 3 or 4 arms.
    """
    if road_class not in ROAD_CLASSES:
        raise ValueError(f"unknown road class {road_class!r}; expected one of {ROAD_CLASSES}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    X = np.stack([_road_raster(road_class, rng).ravel() for _ in range(count)])
    flags = np.full(count, road_class == "intersection")
    return LabeledDataset(X, flags, name=f"{road_class}_{count}_s{seed}")


def concat_datasets(*parts, name=None):
    """Stack datasets row-wise, keeping labels."""
    X = np.vstack([p.features for p in parts])
    y = np.concatenate([p.is_outlier for p in parts])
    return LabeledDataset(X, y, name=name or "+".join(p.name for p in parts))


def road_proxy_dataset(n_inliers=500, n_outliers=50, seed=0):
    """Straight multilane rasters as inliers, intersections as outliers."""
    ss = np.random.SeedSequence(seed)
    s_in, s_out = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    inl = gen_synthetic_road_rasters("straight_multilane", n_inliers, seed=s_in)
    out = gen_synthetic_road_rasters("intersection", n_outliers, seed=s_out)
    return concat_datasets(inl, out, name=f"road_proxy_s{seed}")
