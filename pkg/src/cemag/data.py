"""Labeled datasets: loading, synthesis, imbalancing and splitting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ._validation import DataError, DimensionError, as_float_matrix, as_label_vector

if TYPE_CHECKING:
    from .models import SoftmaxHead

__all__ = [
    "Dataset",
    "EmbeddingSet",
    "ImbalanceProfile",
    "load_csv",
    "load_embedding_table",
    "apply_exponential_imbalance",
    "apply_step_imbalance",
    "apply_imbalance",
    "exponential_counts",
    "stratified_split",
    "synth_gaussian",
]

# guards floor() against representation error, e.g. 0.7 * 90 == 62.99999999999999
_FLOOR_EPS = 1e-9


def _floor(x: float) -> int:
    return int(math.floor(x + _FLOOR_EPS))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with dense integer labels in ``[0, num_classes)``.

    ``class_ids`` maps each dense label back to the id found in the source
    file (identity for generated data).
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int | None = None
    class_ids: tuple[int, ...] | None = None
    name: str = ""

    def __post_init__(self):
        X = as_float_matrix(self.features, name="features")
        y = as_label_vector(self.labels, X.shape[0], name="labels")
        if X.shape[0] == 0:
            raise DataError("dataset is empty")
        C = self.num_classes if self.num_classes is not None else int(y.max()) + 1
        if C < 1 or y.max() >= C:
            raise DataError(f"labels must lie in [0, {C})")
        ids = self.class_ids if self.class_ids is not None else tuple(range(C))
        if len(ids) != C:
            raise DataError("class_ids must have one entry per class")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "num_classes", int(C))
        object.__setattr__(self, "class_ids", tuple(int(i) for i in ids))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    @property
    def imbalance_ratio(self) -> float:
        counts = self.class_counts
        present = counts[counts > 0]
        return float(present.max() / present.min())

    def subset(self, indices) -> "Dataset":
        """Rows at ``indices`` (in the given order), metadata preserved."""
        idx = np.asarray(indices, dtype=np.int64)
        return self._replace(features=self.features[idx], labels=self.labels[idx])

    def _replace(self, **changes) -> "Dataset":
        kwargs = dict(
            features=self.features,
            labels=self.labels,
            num_classes=self.num_classes,
            class_ids=self.class_ids,
            name=self.name,
        )
        kwargs.update(changes)
        return type(self)(**kwargs)

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class EmbeddingSet(Dataset):
    """Pooled deep-feature embeddings, optionally with the trained linear head."""

    head: "SoftmaxHead | None" = None

    def __post_init__(self):
        super().__post_init__()
        if self.head is not None:
            W = self.head.coef_
            if W.shape[1] != self.feature_dim:
                raise DimensionError(
                    f"head has input dimension {W.shape[1]}, embeddings have {self.feature_dim}"
                )
            if W.shape[0] < self.num_classes:
                raise DimensionError(
                    f"head has {W.shape[0]} classes but labels reach {self.num_classes - 1}"
                )

    def _replace(self, **changes) -> "EmbeddingSet":
        changes.setdefault("head", self.head)
        return super()._replace(**changes)


@dataclass(frozen=True)
class ImbalanceProfile:
    kind: str
    ratio: float
    majority_classes: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("step", "exponential"):
            raise DataError(f"unknown imbalance kind {self.kind!r}")
        if not self.ratio >= 1:
            raise DataError(f"imbalance ratio must be >= 1, got {self.ratio}")
        if self.kind == "step" and not self.majority_classes:
            raise DataError("step imbalance needs at least one majority class")


def _parse_label(cell: str, row: int) -> int:
    text = cell.strip()
    try:
        value = int(text)
    except ValueError:
        try:
            f = float(text)
        except ValueError:
            raise DataError(f"row {row}: label {cell!r} is not an integer") from None
        if not math.isfinite(f) or f != int(f):
            raise DataError(f"row {row}: label {cell!r} is not an integer")
        value = int(f)
    if value < 0:
        raise DataError(f"row {row}: label {value} is negative")
    return value


def _read_rows(path: Path, has_header: bool) -> tuple[list[str] | None, list[tuple[int, list[str]]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = None
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if has_header and header is None:
                header = row
                continue
            rows.append((lineno, row))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, rows


def _parse_table(rows, label_column: int) -> tuple[np.ndarray, np.ndarray]:
    width = len(rows[0][1])
    if width < 2:
        raise DataError("need at least one feature column and a label column")
    lc = label_column % width
    feats = np.empty((len(rows), width - 1), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64)
    for i, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"row {lineno}: expected {width} columns, found {len(row)}")
        labels[i] = _parse_label(row[lc], lineno)
        cells = row[:lc] + row[lc + 1 :]
        try:
            feats[i] = [float(c) for c in cells]
        except ValueError as exc:
            raise DataError(f"row {lineno}: {exc}") from None
        if not np.all(np.isfinite(feats[i])):
            raise DataError(f"row {lineno}: non-finite feature value")
    return feats, labels


def load_csv(path, has_header: bool = False, label_column: int = -1, remap_labels: bool = True) -> Dataset:
    """Read a numeric CSV with one integer label column.

    Labels are densified to ``0..C-1`` in ascending order of the original
    ids; ``Dataset.class_ids`` keeps the original ids.
    """
    path = Path(path)
    _, rows = _read_rows(path, has_header)
    X, raw = _parse_table(rows, label_column)
    if remap_labels:
        ids, y = np.unique(raw, return_inverse=True)
        return Dataset(X, y, num_classes=len(ids), class_ids=tuple(ids.tolist()), name=path.stem)
    return Dataset(X, raw, name=path.stem)


def load_head_weights(path) -> "SoftmaxHead":
    from .models import SoftmaxHead

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "W" not in doc or "b" not in doc:
        raise DataError(f"{path}: head file must be a JSON object with 'W' and 'b'")
    return SoftmaxHead.from_weights(doc["W"], doc["b"])


def load_embedding_table(path, head_path=None, label_column: str = "label") -> EmbeddingSet:
    """Read an embedding CSV with header ``f0..f{D-1}`` plus a label column.

    Labels are taken as class ids verbatim since they index the head's rows.
    """
    path = Path(path)
    header, rows = _read_rows(path, has_header=True)
    if header is None or label_column not in header:
        raise DataError(f"{path}: missing label column {label_column!r}")
    lc = header.index(label_column)
    feat_cols = [h for i, h in enumerate(header) if i != lc]
    expected = [f"f{i}" for i in range(len(feat_cols))]
    if feat_cols != expected:
        raise DataError(f"{path}: feature columns must be named f0..f{len(feat_cols) - 1}")
    X, y = _parse_table(rows, lc)
    head = load_head_weights(head_path) if head_path is not None else None
    if head is not None and head.coef_.shape[1] != X.shape[1]:
        raise DimensionError(
            f"head has input dimension {head.coef_.shape[1]}, embeddings have {X.shape[1]}"
        )
    C = head.coef_.shape[0] if head is not None else int(y.max()) + 1
    return EmbeddingSet(X, y, num_classes=C, name=path.stem, head=head)


def _subsample(ds: Dataset, targets: Sequence[int], seed) -> Dataset:
    rng = np.random.default_rng(seed)
    keep = []
    for c, n_keep in enumerate(targets):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size < n_keep:
            raise DataError(f"class {c} has {idx.size} instances, {n_keep} required")
        keep.append(rng.choice(idx, size=n_keep, replace=False))
    return ds.subset(np.sort(np.concatenate(keep)))


def exponential_counts(n_max: int, ratio: float, num_classes: int) -> list[int]:
    """Per-class counts decaying geometrically from ``n_max`` to ``n_max / ratio``."""
    if not ratio >= 1:
        raise DataError(f"ratio must be >= 1, got {ratio}")
    if num_classes == 1:
        return [int(n_max)]
    return [_floor(n_max / ratio ** (c / (num_classes - 1))) for c in range(num_classes)]


def apply_exponential_imbalance(ds: Dataset, n_max: int, ratio: float, seed) -> Dataset:
    return _subsample(ds, exponential_counts(n_max, ratio, ds.num_classes), seed)


def apply_step_imbalance(ds: Dataset, majority_classes, n_maj: int, n_min: int, seed) -> Dataset:
    if not n_maj >= n_min >= 1:
        raise DataError(f"need n_maj >= n_min >= 1, got {n_maj}, {n_min}")
    majority = set(int(c) for c in majority_classes)
    if not majority:
        raise DataError("step imbalance needs at least one majority class")
    targets = [n_maj if c in majority else n_min for c in range(ds.num_classes)]
    return _subsample(ds, targets, seed)


def apply_imbalance(ds: Dataset, profile: ImbalanceProfile, n_max: int, seed, n_min: int | None = None) -> Dataset:
    if profile.kind == "exponential":
        return apply_exponential_imbalance(ds, n_max, profile.ratio, seed)
    if n_min is None:
        n_min = _floor(n_max / profile.ratio)
    return apply_step_imbalance(ds, profile.majority_classes, n_max, n_min, seed)


def split_indices(labels: np.ndarray, train_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < train_fraction < 1:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise DataError(f"class {c} has a single instance; cannot split")
        n_train = min(max(_floor(train_fraction * idx.size), 1), idx.size - 1)
        perm = rng.permutation(idx)
        train.append(perm[:n_train])
        test.append(perm[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(ds: Dataset, train_fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Per-class random partition; the train side gets ``floor(fraction * n_c)`` rows."""
    tr, te = split_indices(ds.labels, train_fraction, seed)
    return ds.subset(tr), ds.subset(te)


def synth_gaussian(spec: dict, seed) -> Dataset:
    """Draw per-class Gaussian samples.

    ``spec`` holds ``means`` (one vector per class), ``variance`` (scalar or
    per-dimension diagonal shared by all classes) and ``counts``.
    Rows are grouped by class in class order.
    """
    try:
        means = np.asarray(spec["means"], dtype=np.float64)
        counts = [int(c) for c in spec["counts"]]
        variance = np.asarray(spec.get("variance", 1.0), dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad synthetic spec: {exc}") from None
    if means.ndim != 2 or means.shape[0] != len(counts):
        raise DataError("means must be a list of equal-length vectors, one per count")
    if any(c < 1 for c in counts):
        raise DataError("every class count must be >= 1")
    if np.any(variance <= 0) or not np.all(np.isfinite(variance)):
        raise DataError("variance must be positive")
    std = np.broadcast_to(np.sqrt(variance), (means.shape[1],))
    rng = np.random.default_rng(seed)
    blocks = [m + std * rng.standard_normal((n, means.shape[1])) for m, n in zip(means, counts)]
    labels = np.repeat(np.arange(len(counts)), counts)
    return Dataset(np.vstack(blocks), labels, num_classes=len(counts), name=spec.get("name", "synthetic"))


def write_csv(ds: Dataset, path) -> None:
    """Write features plus a trailing label column; floats use shortest repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row, label in zip(ds.features.tolist(), ds.labels.tolist()):
            w.writerow([repr(v) for v in row] + [ds.class_ids[label]])
