"""Split each prediction into its classification embeddings (CE).

A CE entry is a latent feature times its weight: ``x_i * W_i`` for logistic
regression, ``K(SV_i, x) * coef_i`` for the kernel SVM and ``fe_i * W[c, i]``
for every class row of a linear head. Decision values are the CE sum plus
a bias that is kept separate from the CE.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import DataError, as_float_matrix, as_float_vector, ce_row_sums, ce_sum, check_feature_dim
from .models import KernelSVC, LogisticRegressionGD, SoftmaxHead, _rbf_block

__all__ = [
    "Decomposition",
    "decompose_logistic",
    "decompose_svm",
    "decompose_head",
    "decompose",
    "batch_decompose",
    "BatchDecomposition",
    "CEProbe",
    "model_kind",
    "write_decompositions",
]


def model_kind(model) -> str:
    if isinstance(model, KernelSVC):
        return "svm"
    if isinstance(model, SoftmaxHead):
        return "head"
    if isinstance(model, LogisticRegressionGD):
        return "logistic"
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _binary_label(kind: str, value: float) -> int:
    # logistic: score 0 -> 1; svm: decision 0 -> 0
    return int(value >= 0) if kind == "logistic" else int(value > 0)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """CE of one instance.

    ``ce`` is a vector for the binary models and a ``(C, F_D)`` matrix for a
    head; ``bias`` and ``decision`` are scalars or length-C vectors to match.
    """

    model_kind: str
    ce: np.ndarray
    bias: float | np.ndarray
    predicted_label: int
    decision: float | np.ndarray
    instance_id: int = 0
    true_label: int | None = None

    @property
    def dim(self) -> int:
        return self.ce.shape[-1]

    @property
    def is_head(self) -> bool:
        return self.model_kind == "head"

    @property
    def is_tp(self) -> bool:
        return self.true_label is not None and self.predicted_label == self.true_label

    def reconstruct(self):
        """Re-sum CE plus bias; equals ``decision`` exactly."""
        if self.is_head:
            return ce_row_sums(self.ce) + self.bias
        return ce_sum(self.ce) + self.bias

    def reconstructed_label(self) -> int:
        value = self.reconstruct()
        if self.is_head:
            return int(np.argmax(value))
        return _binary_label(self.model_kind, value)

    def supporting(self) -> np.ndarray:
        """CE of the predicted outcome, signed so that positive entries push toward it."""
        if self.is_head:
            return self.ce[self.predicted_label]
        return self.ce if self.predicted_label == 1 else -self.ce


def decompose_logistic(model: LogisticRegressionGD, x, instance_id: int = 0, true_label=None) -> Decomposition:
    x = as_float_vector(x, model.n_features_in_)
    ce = x * model.coef_
    value = ce_sum(ce) + model.intercept_
    return Decomposition("logistic", ce, model.intercept_, _binary_label("logistic", value), value,
                         instance_id, true_label)


def decompose_svm(model: KernelSVC, x, instance_id: int = 0, true_label=None) -> Decomposition:
    x = as_float_vector(x, model.n_features_in_)
    k = _rbf_block(x[None, :], model.support_vectors_, model.gamma_)[0]
    ce = k * model.dual_coef_
    value = ce_sum(ce) + model.intercept_
    return Decomposition("svm", ce, model.intercept_, _binary_label("svm", value), value, instance_id, true_label)


def decompose_head(head: SoftmaxHead, fe, instance_id: int = 0, true_label=None) -> Decomposition:
    fe = as_float_vector(fe, head.n_features_in_)
    ce = head.coef_ * fe
    values = ce_row_sums(ce) + head.intercept_
    return Decomposition("head", ce, head.intercept_, int(np.argmax(values)), values, instance_id, true_label)


_DECOMPOSERS = {"logistic": decompose_logistic, "svm": decompose_svm, "head": decompose_head}


def decompose(model, x, instance_id: int = 0, true_label=None) -> Decomposition:
    return _DECOMPOSERS[model_kind(model)](model, x, instance_id, true_label)


def _ce_matrix(model, X: np.ndarray) -> np.ndarray:
    kind = model_kind(model)
    if kind == "logistic":
        return X * model.coef_
    if kind == "svm":
        return _rbf_block(X, model.support_vectors_, model.gamma_) * model.dual_coef_
    return X[:, None, :] * model.coef_[None, :, :]


@dataclass(eq=False)
class BatchDecomposition:
    decompositions: list[Decomposition]
    tp_mask: np.ndarray
    tp_counts: np.ndarray

    def __len__(self):
        return len(self.decompositions)

    def true_positives(self, cls: int | None = None) -> list[Decomposition]:
        return [d for d, tp in zip(self.decompositions, self.tp_mask)
                if tp and (cls is None or d.true_label == cls)]


def batch_decompose(model, data, labels=None, instance_ids: Iterable[int] | None = None,
                    num_classes: int | None = None) -> BatchDecomposition:
    """Decompose every row of ``data`` (a Dataset or a feature matrix plus ``labels``).

    Rows are processed in one vectorised pass; results keep input order.
    """
    if labels is None:
        X, y = data.features, data.labels
        num_classes = num_classes or getattr(data, "num_classes", None)
    else:
        X, y = as_float_matrix(data), np.asarray(labels, dtype=np.int64)
    if y.shape[0] != X.shape[0]:
        raise DataError("features and labels differ in length")
    check_feature_dim(X, model.n_features_in_)
    kind = model_kind(model)
    ids = list(range(X.shape[0])) if instance_ids is None else list(instance_ids)
    ce = _ce_matrix(model, X)
    values = ce_row_sums(ce) + model.intercept_
    if kind == "head":
        preds = np.argmax(values, axis=1)
        C = model.coef_.shape[0]
    else:
        preds = (values >= 0) if kind == "logistic" else (values > 0)
        preds = preds.astype(np.int64)
        C = 2
    C = max(C, num_classes or 0)
    decomps = [
        Decomposition(kind, ce[i], model.intercept_, int(preds[i]), values[i] if kind == "head" else float(values[i]),
                      ids[i], int(y[i]))
        for i in range(X.shape[0])
    ]
    tp = preds == y
    return BatchDecomposition(decomps, tp, np.bincount(y[tp], minlength=C))


class CEProbe(TransformerMixin, BaseEstimator):
    """Transformer mapping inputs to their CE under a fitted model.

    ``transform`` returns ``(n, F_D)`` for logistic regression, ``(n, n_sv)``
    for the SVM and ``(n, C, F_D)`` for a head.
    """

    def __init__(self, model=None):
        self.model = model

    def fit(self, X=None, y=None):
        model_kind(self.model)
        self.n_features_in_ = self.model.n_features_in_
        return self

    def transform(self, X):
        X = as_float_matrix(X)
        check_feature_dim(X, self.model.n_features_in_)
        return _ce_matrix(self.model, X)


def write_decompositions(decomps: list[Decomposition], path_or_file) -> int:
    """CSV of decompositions; head models emit one row per class per instance.

    Returns the number of instances written.
    """
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        if not decomps:
            return 0
        d = decomps[0].dim
        head = decomps[0].is_head
        cols = ["instance_id", "true_label", "predicted_label"]
        cols += ["class", "decision_value", "bias"] if head else ["decision_value", "bias"]
        w.writerow(cols + [f"ce_{i}" for i in range(d)])
        for dec in decomps:
            tl = "" if dec.true_label is None else dec.true_label
            if head:
                for c in range(dec.ce.shape[0]):
                    w.writerow([dec.instance_id, tl, dec.predicted_label, c, repr(float(dec.decision[c])),
                                repr(float(dec.bias[c]))] + [repr(v) for v in dec.ce[c].tolist()])
            else:
                w.writerow([dec.instance_id, tl, dec.predicted_label, repr(float(dec.decision)),
                            repr(float(dec.bias))] + [repr(v) for v in dec.ce.tolist()])
        return len(decomps)
    finally:
        if own:
            fh.close()
