"""Oversampling in raw-feature or embedding space.

Every synthetic sample records its provenance ``(method, parent_a,
parent_b, lam)`` such that ``sample == (1 - lam) * X[parent_a] + lam * X[parent_b]``
up to rounding, where ``X`` is the matrix the method was given.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import ConfigError, DataError, as_float_matrix, as_label_vector, check_positive
from .data import Dataset

__all__ = [
    "METHODS",
    "AugmentConfig",
    "SyntheticBatch",
    "AugmentedSet",
    "knn_same_class",
    "smote",
    "adasyn",
    "adasyn_allocation",
    "remix",
    "latent_smote_dsm",
    "eos",
    "rebalance",
    "Oversampler",
]

METHODS = ("smote", "adasyn", "remix", "dsm", "eos")


@dataclass
class AugmentConfig:
    method: str = "smote"
    k_neighbors: int = 5
    target_counts: list[int] | None = None
    mix_alpha: float = 1.0
    smoothing_eps: float = 0.1
    eos_lambda_max: float = 0.5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown augmentation method {self.method!r}; choose from {METHODS}")
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        check_positive(self.mix_alpha, "mix_alpha")
        if not 0 <= self.smoothing_eps < 1:
            raise ConfigError("smoothing_eps must lie in [0, 1)")
        if not 0 < self.eos_lambda_max <= 1:
            raise ConfigError("eos_lambda_max must lie in (0, 1]")


@dataclass
class SyntheticBatch:
    """Synthetic rows plus per-row provenance.

    ``labels`` is a vector of class ids, or an ``(m, C)`` soft-label matrix
    for mixup-style methods. ``lam`` is the weight on ``parent_b``.
    """

    samples: np.ndarray
    labels: np.ndarray
    method: str
    parent_a: np.ndarray
    parent_b: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        m = self.samples.shape[0]
        if not (self.labels.shape[0] == self.parent_a.shape[0] == self.parent_b.shape[0] == self.lam.shape[0] == m):
            raise DataError("every synthetic sample needs a label and full provenance")
        if self.labels.ndim == 2 and m and not np.allclose(self.labels.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise DataError("soft labels must sum to 1")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def is_soft(self) -> bool:
        return self.labels.ndim == 2

    @property
    def hard_labels(self) -> np.ndarray:
        return self.labels.argmax(axis=1) if self.is_soft else self.labels

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        """Rebuild every sample from its recorded parents in ``X``."""
        lam = self.lam[:, None]
        return (1 - lam) * X[self.parent_a] + lam * X[self.parent_b]

    @classmethod
    def empty(cls, dim: int, method: str, num_classes: int | None = None) -> "SyntheticBatch":
        labels = np.zeros((0, num_classes)) if num_classes else np.zeros(0, dtype=np.int64)
        z = np.zeros(0, dtype=np.int64)
        return cls(np.zeros((0, dim)), labels, method, z, z.copy(), np.zeros(0))

    @classmethod
    def concat(cls, batches: list["SyntheticBatch"]) -> "SyntheticBatch":
        return cls(
            np.vstack([b.samples for b in batches]),
            np.concatenate([b.labels for b in batches]),
            batches[0].method,
            np.concatenate([b.parent_a for b in batches]),
            np.concatenate([b.parent_b for b in batches]),
            np.concatenate([b.lam for b in batches]),
        )

    def to_csv(self, path) -> None:
        """Features, label(s), then method, parent_a, parent_b, lambda."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            d = self.samples.shape[1]
            label_cols = [f"label_{c}" for c in range(self.labels.shape[1])] if self.is_soft else ["label"]
            w.writerow([f"f{i}" for i in range(d)] + label_cols + ["method", "parent_a", "parent_b", "lambda"])
            for s, lab, a, b, lam in zip(self.samples.tolist(), self.labels.tolist(), self.parent_a.tolist(),
                                         self.parent_b.tolist(), self.lam.tolist()):
                lab_cells = [repr(v) for v in lab] if self.is_soft else [lab]
                w.writerow([repr(v) for v in s] + lab_cells + [self.method, a, b, repr(lam)])


@dataclass(eq=False)
class AugmentedSet:
    """Original rows followed by synthetic rows.

    ``soft_labels`` is set only when a mixup-style method produced soft
    targets; ``targets`` is what a trainer should fit against.
    """

    original: Dataset
    batch: SyntheticBatch
    features: np.ndarray = field(init=False)
    labels: np.ndarray = field(init=False)
    soft_labels: np.ndarray | None = field(init=False)

    def __post_init__(self):
        ds, b = self.original, self.batch
        self.features = np.vstack([ds.features, b.samples]) if len(b) else ds.features
        self.labels = np.concatenate([ds.labels, b.hard_labels]) if len(b) else ds.labels
        if b.is_soft:
            self.soft_labels = np.vstack([np.eye(ds.num_classes)[ds.labels], b.labels])
        else:
            self.soft_labels = None

    @property
    def n_original(self) -> int:
        return self.original.n_samples

    @property
    def num_classes(self) -> int:
        return self.original.num_classes

    @property
    def targets(self) -> np.ndarray:
        return self.soft_labels if self.soft_labels is not None else self.labels

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


# ---------------------------------------------------------------------------
# neighbours


def _knn(points: np.ndarray, query: np.ndarray, k: int, exclude: int | None = None) -> np.ndarray:
    d2 = np.sum((points - query) ** 2, axis=1)
    if exclude is not None:
        d2[exclude] = np.inf
    # stable sort: equal distances keep ascending index order
    return np.argsort(d2, kind="stable")[:k]


def knn_same_class(points, query_index: int, k: int) -> np.ndarray:
    """Indices of the ``k`` rows of ``points`` nearest to row ``query_index`` (itself excluded)."""
    points = as_float_matrix(points, name="points")
    if not 1 <= k < points.shape[0]:
        raise DataError(f"k={k} needs between 1 and {points.shape[0] - 1} candidates")
    return _knn(points, points[query_index], k, exclude=query_index)


def _interpolate(X, parents, neighbours, k, rng, method):
    """One synthetic per entry of ``parents``: toward a uniform pick among its k neighbours."""
    n = len(parents)
    picks = rng.integers(0, k, size=n)
    lam = rng.random(n)
    a = np.asarray(parents, dtype=np.int64)
    b = np.array([neighbours[p][j] for p, j in zip(a.tolist(), picks.tolist())], dtype=np.int64)
    samples = X[a] + lam[:, None] * (X[b] - X[a])
    return samples, a, b, lam


def _same_class_smote(X, idx, k, n_synth, rng, label, method):
    """SMOTE over rows ``idx`` of ``X``; provenance indexes rows of ``X``."""
    m = idx.size
    if m < k + 1:
        raise DataError(f"{method}: class {label} has {m} points, needs at least k+1={k + 1}")
    if n_synth < 0:
        raise DataError("n_synth must be >= 0")
    if n_synth == 0:
        return SyntheticBatch.empty(X.shape[1], method)
    pts = X[idx]
    nbrs = {int(idx[i]): idx[knn_same_class(pts, i, k)] for i in range(m)}
    parents = idx[np.arange(n_synth) % m]
    samples, a, b, lam = _interpolate(X, parents, nbrs, k, rng, method)
    return SyntheticBatch(samples, np.full(n_synth, label, dtype=np.int64), method, a, b, lam)


def smote(minority, k: int, n_synth: int, seed, label: int = 1) -> SyntheticBatch:
    """SMOTE on a matrix of same-class points; parents are visited round-robin.

    Provenance indices refer to rows of ``minority``.
    """
    X = as_float_matrix(minority, name="minority")
    return _same_class_smote(X, np.arange(X.shape[0]), k, n_synth, np.random.default_rng(seed), label, "smote")


def adasyn_allocation(ratios, n_total: int) -> np.ndarray:
    """Split ``n_total`` synthetics in proportion to ``ratios``.

    Each point gets ``floor(n_total * r_i / sum(r))``; the leftover goes one
    apiece to the highest-ratio points (ties by ascending index). With all
    ratios zero the split is uniform. ``ratios`` may be integer counts, which
    keeps the arithmetic exact.
    """
    r = np.asarray(ratios)
    m = r.size
    if m == 0:
        raise DataError("no points to allocate over")
    if np.all(r == 0):
        r = np.ones(m, dtype=np.int64)
    if r.dtype.kind in "iu":
        total = int(r.sum())
        g = np.array([n_total * int(v) // total for v in r], dtype=np.int64)
    else:
        g = np.floor(n_total * (r / r.sum())).astype(np.int64)
    residue = n_total - int(g.sum())
    order = np.lexsort((np.arange(m), -r))
    g[order[:residue]] += 1
    return g


def adasyn(ds: Dataset, target_class: int, k: int, n_total: int, seed) -> SyntheticBatch:
    """ADASYN: more synthetics around target points with many other-class neighbours.

    Neighbourhood hardness is measured in the full dataset; interpolation is
    SMOTE-style among same-class neighbours. Provenance indexes ``ds`` rows.
    """
    X, y = ds.features, ds.labels
    idx = np.flatnonzero(y == target_class)
    if idx.size == 0:
        raise DataError(f"class {target_class} is not present")
    if not 1 <= k < ds.n_samples:
        raise DataError(f"k={k} is invalid for a dataset of {ds.n_samples} rows")
    if idx.size < k + 1:
        raise DataError(f"adasyn: class {target_class} has {idx.size} points, needs at least k+1={k + 1}")
    if n_total == 0:
        return SyntheticBatch.empty(X.shape[1], "adasyn")
    hard = np.array([int(np.sum(y[_knn(X, X[i], k, exclude=i)] != target_class)) for i in idx], dtype=np.int64)
    g = adasyn_allocation(hard, n_total)
    pts = X[idx]
    nbrs = {int(idx[i]): idx[knn_same_class(pts, i, k)] for i in range(idx.size)}
    parents = np.repeat(idx, g)
    rng = np.random.default_rng(seed)
    samples, a, b, lam = _interpolate(X, parents, nbrs, k, rng, "adasyn")
    batch = SyntheticBatch(samples, np.full(len(a), target_class, dtype=np.int64), "adasyn", a, b, lam)
    batch.allocation = g
    batch.hardness = hard / k
    return batch


def remix(ds: Dataset, cfg: AugmentConfig, seed, target_class: int | None = None,
          n_synth: int | None = None, batch_size: int = 4096) -> SyntheticBatch:
    """Mixup of uniformly drawn pairs with smoothed soft labels.

    Only mixtures whose dominant label is ``target_class`` (default: the
    smallest class) are kept, until ``n_synth`` have been collected (default:
    enough to match the largest class). ``lam`` in the provenance is the weight
    on ``parent_b``, i.e. one minus the mixup coefficient on ``parent_a``.
    """
    X, y, C = ds.features, ds.labels, ds.num_classes
    counts = ds.class_counts
    if target_class is None:
        present = np.flatnonzero(counts)
        target_class = int(present[np.argmin(counts[present])])
    if n_synth is None:
        n_synth = int(counts.max() - counts[target_class])
    if n_synth == 0:
        return SyntheticBatch.empty(X.shape[1], "remix", C)
    if counts[target_class] == 0:
        raise DataError(f"class {target_class} is not present")
    rng = np.random.default_rng(seed)
    eye = np.eye(C)
    eps = cfg.smoothing_eps
    kept_a, kept_b, kept_mix = [], [], []
    n_kept = 0
    n = ds.n_samples
    while n_kept < n_synth:
        a = rng.integers(0, n, size=batch_size)
        b = rng.integers(0, n, size=batch_size)
        mix = rng.beta(cfg.mix_alpha, cfg.mix_alpha, size=batch_size)
        soft = mix[:, None] * eye[y[a]] + (1 - mix)[:, None] * eye[y[b]]
        keep = np.flatnonzero(soft.argmax(axis=1) == target_class)[: n_synth - n_kept]
        kept_a.append(a[keep])
        kept_b.append(b[keep])
        kept_mix.append(mix[keep])
        n_kept += keep.size
    a, b, mix = np.concatenate(kept_a), np.concatenate(kept_b), np.concatenate(kept_mix)
    samples = mix[:, None] * X[a] + (1 - mix)[:, None] * X[b]
    soft = mix[:, None] * eye[y[a]] + (1 - mix)[:, None] * eye[y[b]]
    soft = (1 - eps) * soft + eps / C
    return SyntheticBatch(samples, soft, "remix", a, b, 1 - mix)


def latent_smote_dsm(embed: Dataset, target_class: int, k: int, n_synth: int, seed) -> SyntheticBatch:
    """SMOTE over the embedding rows of one class; provenance indexes ``embed`` rows."""
    idx = np.flatnonzero(embed.labels == target_class)
    rng = np.random.default_rng(seed)
    return _same_class_smote(embed.features, idx, k, n_synth, rng, target_class, "dsm")


def eos(embed: Dataset, target_class: int, k: int, n_synth: int, seed, lambda_max: float = 0.5) -> SyntheticBatch:
    """Move target-class embeddings part of the way toward nearby other-class embeddings.

    Parents are visited round-robin; the partner is uniform among the ``k``
    nearest adversary rows and ``lam`` is uniform on ``(0, lambda_max]``.
    """
    if not 0 < lambda_max <= 1:
        raise ConfigError("lambda_max must lie in (0, 1]")
    X, y = embed.features, embed.labels
    idx = np.flatnonzero(y == target_class)
    adv = np.flatnonzero(y != target_class)
    if idx.size == 0:
        raise DataError(f"class {target_class} is not present")
    if adv.size == 0:
        raise DataError("eos needs at least one point from another class")
    if k < 1:
        raise DataError("k must be >= 1")
    if n_synth == 0:
        return SyntheticBatch.empty(X.shape[1], "eos")
    k_eff = min(k, adv.size)
    A = X[adv]
    nbrs = {int(i): adv[_knn(A, X[i], k_eff)] for i in idx}
    rng = np.random.default_rng(seed)
    parents = idx[np.arange(n_synth) % idx.size]
    picks = rng.integers(0, k_eff, size=n_synth)
    lam = lambda_max * (1.0 - rng.random(n_synth))
    b = np.array([nbrs[p][j] for p, j in zip(parents.tolist(), picks.tolist())], dtype=np.int64)
    samples = X[parents] + lam[:, None] * (X[b] - X[parents])
    return SyntheticBatch(samples, np.full(n_synth, target_class, dtype=np.int64), "eos", parents, b, lam)


# ---------------------------------------------------------------------------
# rebalancing


def _class_seed(seed, c: int):
    return np.random.SeedSequence([int(seed), int(c)])


def rebalance(ds: Dataset, method: str, cfg: AugmentConfig | None = None, seed=0) -> AugmentedSet:
    """Append synthetics until every class reaches its target count.

    The default target is the largest class count. Originals are kept
    untouched and precede the synthetic rows.
    """
    cfg = cfg or AugmentConfig(method=method)
    if method not in METHODS:
        raise ConfigError(f"unknown augmentation method {method!r}; choose from {METHODS}")
    counts = ds.class_counts
    targets = np.asarray(cfg.target_counts if cfg.target_counts is not None else [counts.max()] * ds.num_classes)
    if targets.shape != counts.shape:
        raise ConfigError(f"target_counts needs {ds.num_classes} entries")
    if np.any(targets < counts):
        raise ConfigError("target_counts must not be below the current class counts")
    deficits = targets - counts
    batches = []
    for c in np.flatnonzero(deficits).tolist():
        n = int(deficits[c])
        s = _class_seed(seed, c)
        if method == "smote":
            b = _same_class_smote(ds.features, np.flatnonzero(ds.labels == c), cfg.k_neighbors, n,
                                  np.random.default_rng(s), c, "smote")
        elif method == "adasyn":
            b = adasyn(ds, c, cfg.k_neighbors, n, s)
        elif method == "remix":
            b = remix(ds, cfg, s, target_class=c, n_synth=n)
        elif method == "dsm":
            b = latent_smote_dsm(ds, c, cfg.k_neighbors, n, s)
        else:
            b = eos(ds, c, cfg.k_neighbors, n, s, cfg.eos_lambda_max)
        batches.append(b)
    soft_classes = ds.num_classes if method == "remix" else None
    batch = SyntheticBatch.concat(batches) if batches else SyntheticBatch.empty(ds.feature_dim, method, soft_classes)
    return AugmentedSet(ds, batch)


class Oversampler(BaseEstimator):
    """``fit_resample`` front end to :func:`rebalance`.

    For ``method="remix"`` the returned ``y`` is an ``(n, C)`` soft-label
    matrix; otherwise it holds class ids.
    """

    def __init__(self, method="smote", k_neighbors=5, mix_alpha=1.0, smoothing_eps=0.1,
                 eos_lambda_max=0.5, random_state=0):
        self.method = method
        self.k_neighbors = k_neighbors
        self.mix_alpha = mix_alpha
        self.smoothing_eps = smoothing_eps
        self.eos_lambda_max = eos_lambda_max
        self.random_state = random_state

    def fit_resample(self, X, y):
        ds = Dataset(as_float_matrix(X), as_label_vector(y))
        cfg = AugmentConfig(self.method, self.k_neighbors, None, self.mix_alpha, self.smoothing_eps,
                            self.eos_lambda_max)
        out = rebalance(ds, self.method, cfg, self.random_state)
        self.batch_ = out.batch
        self.n_original_ = out.n_original
        return out.features, out.targets
