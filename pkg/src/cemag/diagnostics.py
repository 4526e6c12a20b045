"""Sparsity, coverage, contribution-share and frequency/magnitude metrics over CE."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import spearmanr

from ._validation import DiagnosticError
from .probe import Decomposition

log = logging.getLogger(__name__)

__all__ = [
    "InstanceSparsity",
    "ClassCoverage",
    "ContributionShare",
    "FrequencyMagnitude",
    "GroupStats",
    "minimal_ce_count",
    "class_unique_ce",
    "topk_contribution_share",
    "fraction_rule_k",
    "frequency_magnitude_profile",
    "top_supporting_indices",
    "aggregate",
    "assign_groups",
]

BASELINES = ("bias", "opposing")
K_RULES = ("fraction", "absolute")


@dataclass(frozen=True)
class InstanceSparsity:
    instance_id: int
    cls: int
    k: int
    dim: int
    baseline: str = "bias"

    @property
    def fraction(self) -> float:
        return self.k / self.dim


@dataclass(frozen=True)
class ClassCoverage:
    cls: int
    unique_indices: frozenset
    dim: int
    top_k: int

    @property
    def coverage_fraction(self) -> float:
        return len(self.unique_indices) / self.dim


@dataclass(frozen=True)
class ContributionShare:
    instance_id: int
    cls: int
    share: float
    k: int
    n_supporting: int


@dataclass(frozen=True)
class FrequencyMagnitude:
    cls: int
    entries: list  # (index, frequency, mean magnitude), by magnitude descending
    spearman_rho: float
    frequency: np.ndarray
    mean_magnitude: np.ndarray
    n_instances: int


def _require_tp(d: Decomposition) -> None:
    if not d.is_tp:
        raise DiagnosticError(
            f"instance {d.instance_id} is not a true positive "
            f"(predicted {d.predicted_label}, true {d.true_label})"
        )


def _runner_up(values: np.ndarray, t: int) -> int:
    others = values.copy()
    others[t] = -np.inf
    return int(np.argmax(others))


def _beats(d: Decomposition):
    """Predicate on an accumulated value meaning "still predicts the same label".

    Follows each model's tie rule so a true positive always satisfies it.
    """
    if d.is_head:
        t = d.predicted_label
        r = _runner_up(d.decision, t)
        comp = float(d.decision[r])
        return (lambda s: s >= comp) if t < r else (lambda s: s > comp)
    if d.predicted_label == 1:
        return (lambda s: s >= 0) if d.model_kind == "logistic" else (lambda s: s > 0)
    return (lambda s: s <= 0) if d.model_kind == "svm" else (lambda s: s < 0)


def _support_order(values: np.ndarray) -> np.ndarray:
    """Indices by descending value, ties by ascending index."""
    return np.argsort(-values, kind="stable")


def minimal_ce_count(d: Decomposition, baseline: str = "bias") -> InstanceSparsity:
    """Fewest CE whose sum, added to the starting value, keeps the prediction.

    The head path competes against the runner-up class's full logit; the
    binary paths against the decision threshold 0. With ``baseline="bias"``
    accumulation starts from the bias alone; ``"opposing"`` starts from the
    bias plus every CE that pushes against the prediction. Adding the largest
    supporting CE first is optimal for any subset size.
    """
    if baseline not in BASELINES:
        raise DiagnosticError(f"unknown baseline {baseline!r}")
    _require_tp(d)
    beats = _beats(d)
    sign = 1.0 if (d.is_head or d.predicted_label == 1) else -1.0
    s = d.supporting()  # positive entries push toward the prediction
    bias = float(d.bias[d.predicted_label]) if d.is_head else float(d.bias)
    start = bias
    if baseline == "opposing":
        start = bias + sign * math.fsum(s[s < 0].tolist())
        s = np.where(s < 0, 0.0, s)
    order = _support_order(s)
    if beats(start):
        return InstanceSparsity(d.instance_id, d.predicted_label, 0, d.dim, baseline)
    prefix = start + sign * np.cumsum(s[order])
    hits = np.flatnonzero([beats(v) for v in prefix.tolist()])
    if hits.size == 0:
        raise DiagnosticError(f"instance {d.instance_id}: no CE prefix reproduces the prediction")
    return InstanceSparsity(d.instance_id, d.predicted_label, int(hits[0]) + 1, d.dim, baseline)


def top_supporting_indices(d: Decomposition, top_k: int) -> np.ndarray:
    """Up to ``top_k`` indices of the largest CE pushing toward the prediction.

    Entries that are zero or oppose the prediction are never selected.
    """
    s = d.supporting()
    order = _support_order(s)[: min(top_k, d.dim)]
    return order[s[order] > 0]


def class_unique_ce(decomps: Sequence[Decomposition], top_k: int = 10) -> ClassCoverage:
    if not decomps:
        raise DiagnosticError("class_unique_ce needs at least one decomposition")
    cls = decomps[0].predicted_label
    dim = decomps[0].dim
    union: set[int] = set()
    for d in decomps:
        if d.predicted_label != cls:
            raise DiagnosticError("all decompositions must share one predicted class")
        union.update(top_supporting_indices(d, top_k).tolist())
    return ClassCoverage(cls, frozenset(union), dim, top_k)


def fraction_rule_k(dim: int, fraction: float = 0.10) -> int:
    return max(1, int(math.floor(fraction * dim + 0.5)))


def topk_contribution_share(d: Decomposition, k_rule: str = "fraction") -> ContributionShare:
    """Share of the supporting CE mass carried by its largest ``k`` entries.

    ``k_rule="fraction"`` takes ``k = max(1, round(0.10 * dim))``;
    ``"absolute"`` takes ``k = min(10, |supporting|)``.
    """
    if k_rule not in K_RULES:
        raise DiagnosticError(f"unknown k_rule {k_rule!r}")
    _require_tp(d)
    s = d.supporting()
    D = s[s > 0]
    if D.size == 0:
        raise DiagnosticError(f"instance {d.instance_id} has no supporting CE")
    k = fraction_rule_k(d.dim) if k_rule == "fraction" else min(10, D.size)
    top = np.sort(D)[::-1][:k]
    share = math.fsum(top.tolist()) / math.fsum(D.tolist())
    return ContributionShare(d.instance_id, d.predicted_label, share, k, int(D.size))


def _spearman(freq: np.ndarray, mag: np.ndarray) -> float:
    if freq.size < 2:
        return float("nan")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rho = spearmanr(freq, mag).statistic
    return float(rho)


def frequency_magnitude_profile(decomps: Sequence[Decomposition], top_k: int = 10, top_m: int = 5) -> FrequencyMagnitude:
    """How often each CE index is among an instance's top supporters, against its mean |CE|.

    ``spearman_rho`` correlates frequency with mean magnitude over indices
    used at least once (average ranks for ties; NaN when undefined).
    """
    if not decomps:
        raise DiagnosticError("frequency_magnitude_profile needs at least one decomposition")
    cls = decomps[0].predicted_label
    dim = decomps[0].dim
    freq = np.zeros(dim, dtype=np.int64)
    mags = np.zeros((len(decomps), dim))
    for row, d in enumerate(decomps):
        if d.predicted_label != cls:
            raise DiagnosticError("all decompositions must share one predicted class")
        freq[top_supporting_indices(d, top_k)] += 1
        mags[row] = np.abs(d.supporting())
    mean_mag = mags.mean(axis=0)
    order = _support_order(mean_mag)[:top_m]
    entries = [(int(i), int(freq[i]), float(mean_mag[i])) for i in order]
    used = freq > 0
    return FrequencyMagnitude(cls, entries, _spearman(freq[used], mean_mag[used]), freq, mean_mag, len(decomps))


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class GroupStats:
    group: str
    metric: str
    mean: float
    sd: float
    n: int


def assign_groups(train_counts: Sequence[int]) -> dict[int, str]:
    """Majority = every class tied for the largest training count; the rest are minority."""
    counts = np.asarray(train_counts)
    top = counts.max()
    return {c: ("majority" if counts[c] == top else "minority") for c in range(counts.size)}


def aggregate(records: Iterable[dict], metrics: Sequence[str], grouping: str = "class",
              train_counts: Sequence[int] | None = None) -> list[GroupStats]:
    """Mean and population standard deviation of each metric per group.

    ``records`` are dicts with a ``"class"`` key and the metric keys; NaN
    values are skipped. ``grouping="majority"`` pools classes into majority
    and minority using ``train_counts``. Empty groups are omitted.
    """
    records = sorted(records, key=lambda r: (r.get("instance_id", 0), r["class"]))
    if grouping == "class":
        key = lambda r: str(r["class"])  # noqa: E731
        groups = sorted({key(r) for r in records}, key=int)
    elif grouping == "majority":
        if train_counts is None:
            raise DiagnosticError("majority grouping needs the training class counts")
        names = assign_groups(train_counts)
        key = lambda r: names[r["class"]]  # noqa: E731
        groups = ["majority", "minority"]
    else:
        raise DiagnosticError(f"unknown grouping {grouping!r}")
    out = []
    for g in groups:
        for m in metrics:
            vals = np.array([r[m] for r in records if key(r) == g and not _isnan(r[m])], dtype=np.float64)
            if vals.size == 0:
                log.warning("group %s has no values for %s; omitted", g, m)
                continue
            out.append(GroupStats(g, m, float(vals.mean()), float(vals.std()), int(vals.size)))
    return out


def _isnan(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))
