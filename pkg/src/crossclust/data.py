"""Synthetic dataset generation and CSV I/O.

Truth labels ride along in :class:`Dataset` for evaluation only; training
code paths receive the feature matrix alone.  CSV round trips are bit-exact:
floats are written with shortest round-trip decimal formatting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, CsvFormatError
from .metrics import Partition

_CENTER_ATTEMPTS = 1000
_CENTER_MARGIN = 1.05  # typical center spacing sits just above the contracted floor


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    truth: Partition | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.asarray(self.X, dtype=np.float64)
        if x.ndim != 2:
            raise CsvFormatError("feature matrix must be 2-D")
        object.__setattr__(self, "X", x)
        if self.truth is not None and len(self.truth) != x.shape[0]:
            raise CsvFormatError(
                f"label count {len(self.truth)} does not match {x.shape[0]} rows"
            )
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != x.shape[1]:
                raise CsvFormatError("feature_names length does not match column count")
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def without_labels(self) -> "Dataset":
        return replace(self, truth=None)


def standardize(dataset: Dataset) -> Dataset:
    """Shift/scale each feature to zero mean and unit variance.

    Constant features are left centered but unscaled.
    """
    x = dataset.X
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return replace(dataset, X=(x - mean) / std)


def generate_blobs(
    seed: int,
    n: int,
    d: int,
    clusters: int,
    separation: float,
    sigma: float,
) -> Dataset:
    """Isotropic Gaussian clusters with centers at pairwise distance >= separation * sigma.

    Cluster sizes are balanced within one sample; rows are grouped by
    cluster; features are standardized.  Deterministic given the seed.
    """
    if clusters < 2:
        raise ConfigError("clusters", f"need at least 2 clusters, got {clusters}")
    if n < clusters:
        raise ConfigError("n", f"need n >= clusters, got n={n}, clusters={clusters}")
    if d < 2:
        raise ConfigError("d", f"need at least 2 features, got {d}")
    if separation <= 0 or sigma <= 0:
        raise ConfigError("separation", "separation and sigma must be positive")
    rng = np.random.default_rng(seed)
    min_dist = separation * sigma
    # Center scale targets typical pairwise distances only modestly above the
    # contracted floor (Gaussian pairs sit near scale * sqrt(2d)), escalating
    # when rejection sampling cannot pack all clusters at that spread.
    centers = None
    scale = _CENTER_MARGIN * min_dist / np.sqrt(2.0 * d)
    for _ in range(8):
        placed = np.empty((clusters, d))
        count = 0
        for _ in range(_CENTER_ATTEMPTS):
            candidate = rng.normal(0.0, scale, size=d)
            if count == 0 or np.linalg.norm(placed[:count] - candidate, axis=1).min() >= min_dist:
                placed[count] = candidate
                count += 1
                if count == clusters:
                    break
        if count == clusters:
            centers = placed
            break
        scale *= 1.5
    if centers is None:
        raise ConfigError(
            "separation",
            f"could not place {clusters} centers at distance >= {min_dist} "
            f"within {_CENTER_ATTEMPTS} attempts per scale",
        )
    base, extra = divmod(n, clusters)
    sizes = [base + 1 if k < extra else base for k in range(clusters)]
    labels = np.repeat(np.arange(clusters), sizes)
    x = centers[labels] + rng.normal(0.0, sigma, size=(n, d))
    names = tuple(f"f{j}" for j in range(d))
    dataset = Dataset(X=x, truth=Partition(labels, clusters), feature_names=names)
    return standardize(dataset)


def save_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Write features (and labels, if present) as UTF-8 CSV with a header row."""
    names = dataset.feature_names or tuple(f"f{j}" for j in range(dataset.d))
    header = list(names)
    if dataset.truth is not None:
        header.append(label_column)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.X[i]]
            if dataset.truth is not None:
                row.append(str(int(dataset.truth.labels[i])))
            writer.writerow(row)


def load_csv(path, label_column: str | None = None) -> Dataset:
    """Load a headered numeric CSV; map the label column (if named) to a 0-based partition.

    Label values become cluster ids in order of first appearance.  Features
    are returned exactly as stored (no standardization), so a save/load round
    trip reproduces the matrix bit-exactly.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path} is empty") from None
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise CsvFormatError(f"label column '{label_column}' not in header {header}")
            label_idx = header.index(label_column)
        feature_idx = [j for j in range(len(header)) if j != label_idx]
        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for line_no, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise CsvFormatError(
                    f"expected {len(header)} cells, found {len(record)}", row=line_no
                )
            values = []
            for j in feature_idx:
                try:
                    values.append(float(record[j]))
                except ValueError:
                    raise CsvFormatError(
                        f"non-numeric cell {record[j]!r}", row=line_no, col=j + 1
                    ) from None
            rows.append(values)
            if label_idx is not None:
                raw_labels.append(record[label_idx])
    if not rows:
        raise CsvFormatError(f"{path} has a header but no data rows")
    x = np.asarray(rows, dtype=np.float64)
    truth = None
    if label_idx is not None:
        seen: dict[str, int] = {}
        ids = [seen.setdefault(tok, len(seen)) for tok in raw_labels]
        truth = Partition(np.asarray(ids, dtype=np.int64), len(seen))
    names = tuple(header[j] for j in feature_idx)
    return Dataset(X=x, truth=truth, feature_names=names)
