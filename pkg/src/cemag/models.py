"""Parametric classifiers whose decisions are linear sums of per-feature terms.

Three estimators follow the scikit-learn fit/predict protocol:

* :class:`LogisticRegressionGD` - binary L2-regularised logistic regression.
* :class:`KernelSVC` - binary soft-margin RBF SVM solved by SMO.
* :class:`SoftmaxHead` - multiclass linear head over embeddings.

All decision values are computed as a correctly rounded sum of the
per-feature terms plus the bias, the same way :mod:`cemag.probe` does, so
labels reconstructed from a decomposition always equal ``predict``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np
from scipy.special import expit, logsumexp, softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    ConfigError,
    ConvergenceError,
    DataError,
    as_float_matrix,
    as_float_vector,
    as_label_vector,
    ce_row_sums,
    ce_sum,
    check_feature_dim,
    check_positive,
    require_classes,
)

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "LogisticRegressionGD",
    "KernelSVC",
    "SoftmaxHead",
    "rbf_kernel",
    "train_logistic",
    "train_svm",
    "train_softmax_head",
    "predict_logistic",
    "predict_svm",
    "predict_head",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

_MAX_HALVINGS = 60


@dataclass
class TrainConfig:
    l2_strength: float = 1e-4
    learning_rate: float = 0.5
    max_iterations: int = 5000
    tolerance: float = 1e-7
    svm_c: float = 1.0
    svm_gamma: float | str = "scale"
    svm_tolerance: float = 1e-3
    svm_max_pair_updates: int = 1_000_000
    soft_label_support: bool = True

    def __post_init__(self):
        check_positive(self.l2_strength, "l2_strength", strict=False)
        check_positive(self.learning_rate, "learning_rate")
        check_positive(self.tolerance, "tolerance")
        check_positive(self.svm_c, "svm_c")
        check_positive(self.svm_tolerance, "svm_tolerance")
        if self.max_iterations < 1 or self.svm_max_pair_updates < 1:
            raise ConfigError("iteration budgets must be >= 1")
        if isinstance(self.svm_gamma, str):
            if self.svm_gamma not in ("scale", "auto"):
                raise ConfigError(f"svm_gamma must be 'scale' or a positive number, got {self.svm_gamma!r}")
        else:
            check_positive(self.svm_gamma, "svm_gamma")

    @classmethod
    def from_dict(cls, doc: dict | None) -> "TrainConfig":
        doc = dict(doc or {})
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown trainer option(s): {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# gradient descent with step halving


@dataclass
class _DescentResult:
    params: np.ndarray
    losses: list
    n_iter: int
    converged: bool


def _descend(fun, params0: np.ndarray, lr0: float, max_iter: int, tol: float) -> _DescentResult:
    """Full-batch gradient descent; a step that raises the loss is halved until it doesn't."""
    p = params0.copy()
    loss, grad = fun(p)
    if not np.isfinite(loss):
        raise ConvergenceError("loss is non-finite at iteration 0")
    losses = [loss]
    lr = lr0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            converged = True
            it -= 1
            break
        any_finite = False
        for _ in range(_MAX_HALVINGS):
            # overflowing candidates are detected and rejected below
            with np.errstate(over="ignore", invalid="ignore"):
                cand = p - lr * grad
                new_loss, new_grad = fun(cand)
            if np.isfinite(new_loss):
                any_finite = True
                if new_loss <= loss:
                    break
            lr *= 0.5
        else:
            if not any_finite:
                raise ConvergenceError(f"loss became non-finite at iteration {it}")
            # no descent possible at float resolution
            converged = bool(np.max(np.abs(grad)) < tol)
            it -= 1
            break
        p, loss, grad = cand, new_loss, new_grad
        losses.append(loss)
    else:
        converged = bool(np.max(np.abs(grad)) < tol)
    return _DescentResult(p, losses, it, converged)


def _binary_targets(y) -> tuple[np.ndarray, bool]:
    """Hard {0,1} labels or soft probabilities of class 1; returns (targets, is_soft)."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] != 2:
            raise DataError("soft label matrix for a binary model must have 2 columns")
        arr = arr[:, 1]
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise DataError("labels must be a finite 1-D array")
    if np.any(arr < 0) or np.any(arr > 1):
        raise DataError("binary labels must lie in [0, 1]")
    soft = bool(np.any((arr != 0) & (arr != 1)))
    return arr, soft


# ---------------------------------------------------------------------------
# logistic regression


class LogisticRegressionGD(ClassifierMixin, BaseEstimator):
    """Binary logistic regression fit by full-batch gradient descent.

    Minimises the mean negative log-likelihood plus
    ``0.5 * l2_strength * ||coef||^2`` (bias unpenalised). ``y`` may hold
    hard labels in {0, 1} or soft targets in [0, 1].

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    loss_curve_ : list of float
        Training loss after every accepted step (non-increasing).
    converged_ : bool
        Whether the gradient max-norm fell below ``tol``.
    """

    def __init__(self, l2_strength=1e-4, learning_rate=0.5, max_iter=5000, tol=1e-7):
        self.l2_strength = l2_strength
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol

    def _loss_grad(self, X, t):
        n = X.shape[0]
        lam = self.l2_strength

        def fun(p):
            w, b = p[:-1], p[-1]
            z = X @ w + b
            loss = np.mean(np.logaddexp(0.0, z) - t * z) + 0.5 * lam * np.dot(w, w)
            r = (expit(z) - t) / n
            grad = np.empty_like(p)
            grad[:-1] = X.T @ r + lam * w
            grad[-1] = r.sum()
            return float(loss), grad

        return fun

    def fit(self, X, y):
        X = as_float_matrix(X)
        t, _ = _binary_targets(y)
        if t.shape[0] != X.shape[0]:
            raise DataError("X and y have different numbers of rows")
        hard = t >= 0.5
        if hard.all() or not hard.any():
            raise DataError("logistic training needs both classes present")
        res = _descend(self._loss_grad(X, t), np.zeros(X.shape[1] + 1), self.learning_rate, self.max_iter, self.tol)
        self.coef_ = res.params[:-1]
        self.intercept_ = float(res.params[-1])
        self.loss_curve_ = res.losses
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        if not res.converged:
            log.debug("logistic regression stopped after %d iterations without converging", res.n_iter)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = as_float_matrix(X)
        check_feature_dim(X, self.n_features_in_)
        return ce_row_sums(X * self.coef_) + self.intercept_

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(np.int64)

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1 - p1, p1])

    @classmethod
    def from_weights(cls, W, b) -> "LogisticRegressionGD":
        model = cls()
        model.coef_ = as_float_vector(W, name="W")
        model.intercept_ = float(b)
        model.n_features_in_ = model.coef_.shape[0]
        model.classes_ = np.array([0, 1])
        return model


# ---------------------------------------------------------------------------
# kernel SVM


def rbf_kernel(a, b, gamma: float) -> float:
    """``exp(-gamma * ||a - b||^2)``."""
    a = as_float_vector(a, name="a")
    b = as_float_vector(b, a.shape[0], name="b")
    check_positive(gamma, "gamma")
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


def _rbf_block(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix between rows of ``A`` and ``B`` using explicit differences."""
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, int(4_000_000 // max(1, B.shape[0] * A.shape[1])))
    for s in range(0, A.shape[0], step):
        diff = A[s : s + step, None, :] - B[None, :, :]
        out[s : s + step] = np.exp(-gamma * np.einsum("ijk,ijk->ij", diff, diff))
    return out


class _KernelRows:
    """Training-kernel rows, precomputed when they fit in memory, otherwise cached on demand."""

    def __init__(self, X, gamma, budget_bytes=400_000_000):
        self.X = X
        self.gamma = gamma
        self.sq = np.einsum("ij,ij->i", X, X)
        n = X.shape[0]
        self.full = None
        self.cache: dict[int, np.ndarray] = {}
        self.max_rows = max(2, budget_bytes // (8 * n))
        if n * n * 8 <= budget_bytes:
            d2 = self.sq[:, None] + self.sq[None, :] - 2 * X @ X.T
            np.maximum(d2, 0, out=d2)
            np.fill_diagonal(d2, 0.0)
            self.full = np.exp(-gamma * d2)

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is None:
            d2 = np.maximum(self.sq + self.sq[i] - 2 * self.X @ self.X[i], 0)
            d2[i] = 0.0
            r = np.exp(-self.gamma * d2)
            if len(self.cache) >= self.max_rows:
                self.cache.pop(next(iter(self.cache)))
            self.cache[i] = r
        return r


class KernelSVC(ClassifierMixin, BaseEstimator):
    """Binary soft-margin SVM with an RBF kernel, trained by SMO.

    Solves ``min 0.5 a'Qa - sum(a)`` subject to ``0 <= a_i <= C`` and
    ``y'a = 0`` with ``Q_ij = y_i y_j K(x_i, x_j)``. Working pairs are the
    maximal violating index ``i`` plus the partner ``j`` giving the largest
    second-order decrease; iteration stops once the maximal KKT violation
    drops below ``tol``.

    ``gamma="scale"`` uses ``1 / (n_features * X.var())``.

    Attributes
    ----------
    support_vectors_ : ndarray of shape (n_sv, n_features)
    dual_coef_ : ndarray of shape (n_sv,)
        Signed coefficients ``alpha_i * y_i`` with ``y_i`` in {-1, +1}.
    intercept_ : float
    gamma_ : float
    kkt_violation_ : float
    """

    def __init__(self, C=1.0, gamma="scale", tol=1e-3, max_pair_updates=1_000_000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_pair_updates = max_pair_updates

    def _resolve_gamma(self, X):
        if isinstance(self.gamma, str):
            if self.gamma == "auto":
                return 1.0 / X.shape[1]
            if self.gamma != "scale":
                raise ConfigError(f"unknown gamma {self.gamma!r}")
            var = X.var()
            return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        check_positive(self.gamma, "gamma")
        return float(self.gamma)

    def fit(self, X, y):
        X = as_float_matrix(X)
        y_arr = np.asarray(y)
        if y_arr.ndim != 1 or (y_arr.dtype.kind == "f" and np.any((y_arr != 0) & (y_arr != 1))):
            raise ConfigError("the SVM trainer does not accept soft labels")
        y_arr = as_label_vector(y_arr, X.shape[0])
        if np.any(y_arr > 1):
            raise DataError("SVM labels must be 0 or 1")
        require_classes(y_arr, (0, 1))
        check_positive(self.C, "C")
        gamma = self._resolve_gamma(X)
        alpha, rho, n_iter, viol = self._smo(X, np.where(y_arr == 1, 1.0, -1.0), gamma)
        coef = alpha * np.where(y_arr == 1, 1.0, -1.0)
        sv = np.abs(coef) > 1e-12
        self.support_ = np.flatnonzero(sv)
        self.support_vectors_ = X[sv].copy()
        self.dual_coef_ = coef[sv]
        self.intercept_ = float(-rho)
        self.gamma_ = gamma
        self.n_iter_ = n_iter
        self.kkt_violation_ = viol
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        return self

    def _smo(self, X, ys, gamma):
        n = X.shape[0]
        C = float(self.C)
        K = _KernelRows(X, gamma)
        alpha = np.zeros(n)
        G = -np.ones(n)
        pos = ys > 0
        tau = 1e-12
        viol = np.inf
        for it in range(self.max_pair_updates + 1):
            at_upper = alpha >= C
            at_lower = alpha <= 0
            up = np.where(pos, ~at_upper, ~at_lower)
            low = np.where(pos, ~at_lower, ~at_upper)
            score = -ys * G
            if not up.any() or not low.any():
                viol = 0.0
                break
            cand = np.where(up, score, -np.inf)
            i = int(np.argmax(cand))
            g_max = cand[i]
            g_min = np.min(score[low])
            viol = float(g_max - g_min)
            if viol < self.tol:
                break
            if it == self.max_pair_updates:
                err = ConvergenceError(
                    f"SMO did not converge in {self.max_pair_updates} pair updates; "
                    f"max KKT violation {viol:.3e}"
                )
                err.kkt_violation = viol
                raise err
            Ki = K.row(i)
            grad_diff = g_max - score
            quad = 2.0 - 2.0 * Ki  # K(x, x) == 1 for RBF
            quad = np.where(quad > 0, quad, tau)
            obj = np.where(low & (grad_diff > 0), -(grad_diff**2) / quad, np.inf)
            j = int(np.argmin(obj))
            Kj = K.row(j)
            ai, aj = alpha[i], alpha[j]
            if ys[i] != ys[j]:
                q = 2.0 + 2.0 * ys[i] * ys[j] * Ki[j]
                q = q if q > 0 else tau
                delta = (-G[i] - G[j]) / q
                diff = ai - aj
                new_i, new_j = ai + delta, aj + delta
                if diff > 0:
                    if new_j < 0:
                        new_j, new_i = 0.0, diff
                elif new_i < 0:
                    new_i, new_j = 0.0, -diff
                if diff > 0:
                    if new_i > C:
                        new_i, new_j = C, C - diff
                elif new_j > C:
                    new_j, new_i = C, C + diff
            else:
                q = 2.0 - 2.0 * Ki[j]
                q = q if q > 0 else tau
                delta = (G[i] - G[j]) / q
                total = ai + aj
                new_i, new_j = ai - delta, aj + delta
                if total > C:
                    if new_i > C:
                        new_i, new_j = C, total - C
                elif new_j < 0:
                    new_j, new_i = 0.0, total
                if total > C:
                    if new_j > C:
                        new_j, new_i = C, total - C
                elif new_i < 0:
                    new_i, new_j = 0.0, total
            d_i, d_j = new_i - ai, new_j - aj
            alpha[i], alpha[j] = new_i, new_j
            G += ys * (ys[i] * Ki * d_i + ys[j] * Kj * d_j)
        rho = self._rho(alpha, G, ys, C)
        return alpha, rho, it, viol

    @staticmethod
    def _rho(alpha, G, ys, C):
        yG = ys * G
        at_upper = alpha >= C
        at_lower = alpha <= 0
        free = ~at_upper & ~at_lower
        if free.any():
            return float(yG[free].mean())
        ub_mask = (at_upper & (ys < 0)) | (at_lower & (ys > 0))
        lb_mask = (at_upper & (ys > 0)) | (at_lower & (ys < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        return float((ub + lb) / 2)

    def kernel_features(self, X) -> np.ndarray:
        """Kernel evaluations against every support vector, shape (n, n_sv)."""
        check_is_fitted(self, "dual_coef_")
        X = as_float_matrix(X)
        check_feature_dim(X, self.n_features_in_)
        return _rbf_block(X, self.support_vectors_, self.gamma_)

    def decision_function(self, X):
        return ce_row_sums(self.kernel_features(X) * self.dual_coef_) + self.intercept_

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)

    def dual_objective(self) -> float:
        """``sum(alpha) - 0.5 * a'Qa`` evaluated on the support vectors."""
        check_is_fitted(self, "dual_coef_")
        Kss = _rbf_block(self.support_vectors_, self.support_vectors_, self.gamma_)
        c = self.dual_coef_
        return float(np.abs(c).sum() - 0.5 * c @ Kss @ c)

    @classmethod
    def from_weights(cls, SV, alpha, b, gamma) -> "KernelSVC":
        model = cls(gamma=float(gamma))
        model.support_vectors_ = as_float_matrix(SV, name="SV")
        model.dual_coef_ = as_float_vector(alpha, model.support_vectors_.shape[0], name="alpha")
        if model.dual_coef_.size < 1:
            raise DataError("an SVM needs at least one support vector")
        model.intercept_ = float(b)
        model.gamma_ = float(gamma)
        check_positive(model.gamma_, "gamma")
        model.n_features_in_ = model.support_vectors_.shape[1]
        model.classes_ = np.array([0, 1])
        return model


# ---------------------------------------------------------------------------
# softmax head


def _soft_targets(y, n_classes: int | None) -> tuple[np.ndarray, int]:
    arr = np.asarray(y)
    if arr.ndim == 2:
        T = arr.astype(np.float64)
        if not np.all(np.isfinite(T)) or np.any(T < 0) or not np.allclose(T.sum(axis=1), 1.0, atol=1e-9):
            raise DataError("soft labels must be non-negative rows summing to 1")
        C = T.shape[1]
        if n_classes is not None and n_classes != C:
            raise DataError(f"soft labels have {C} columns, expected {n_classes}")
        require_classes(T.argmax(axis=1), range(C))
        return T, C
    labels = as_label_vector(arr)
    C = n_classes if n_classes is not None else int(labels.max()) + 1
    if labels.max() >= C:
        raise DataError(f"labels must lie in [0, {C})")
    require_classes(labels, range(C))
    return np.eye(C)[labels], C


class SoftmaxHead(ClassifierMixin, BaseEstimator):
    """Multiclass linear head ``argmax(W fe + b)`` fit by full-batch gradient descent.

    Minimises mean cross-entropy plus ``0.5 * l2_strength * ||W||^2``.
    ``y`` is either integer class ids or an ``(n, C)`` matrix of soft labels;
    hard labels are trained as their one-hot rows.
    """

    def __init__(self, l2_strength=1e-4, learning_rate=0.5, max_iter=5000, tol=1e-7, n_classes=None):
        self.l2_strength = l2_strength
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol
        self.n_classes = n_classes

    def fit(self, X, y):
        X = as_float_matrix(X)
        T, C = _soft_targets(y, self.n_classes)
        if C < 2:
            raise DataError("a classification head needs at least 2 classes")
        if T.shape[0] != X.shape[0]:
            raise DataError("X and y have different numbers of rows")
        n, d = X.shape
        lam = self.l2_strength

        def fun(p):
            W = p[: C * d].reshape(C, d)
            b = p[C * d :]
            Z = X @ W.T + b
            loss = np.mean(logsumexp(Z, axis=1) - np.sum(T * Z, axis=1)) + 0.5 * lam * np.sum(W * W)
            R = (softmax(Z, axis=1) - T) / n
            grad = np.concatenate([(R.T @ X + lam * W).ravel(), R.sum(axis=0)])
            return float(loss), grad

        res = _descend(fun, np.zeros(C * d + C), self.learning_rate, self.max_iter, self.tol)
        self.coef_ = res.params[: C * d].reshape(C, d)
        self.intercept_ = res.params[C * d :]
        self.loss_curve_ = res.losses
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.n_features_in_ = d
        self.classes_ = np.arange(C)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = as_float_matrix(X)
        check_feature_dim(X, self.n_features_in_)
        return ce_row_sums(X[:, None, :] * self.coef_[None, :, :]) + self.intercept_

    def predict(self, X):
        # np.argmax returns the first maximum: ties go to the smallest class id
        return np.argmax(self.decision_function(X), axis=1).astype(np.int64)

    @classmethod
    def from_weights(cls, W, b) -> "SoftmaxHead":
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if W.ndim != 2:
            raise DataError("head W must be a C x F_D matrix")
        if b.shape != (W.shape[0],):
            raise DataError(f"head b must have {W.shape[0]} entries, got shape {b.shape}")
        if W.shape[0] < 2:
            raise DataError("a classification head needs at least 2 classes")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise DataError("head weights must be finite")
        model = cls(n_classes=W.shape[0])
        model.coef_ = W
        model.intercept_ = b
        model.n_features_in_ = W.shape[1]
        model.classes_ = np.arange(W.shape[0])
        return model


# ---------------------------------------------------------------------------
# functional interface


def _xy(train):
    """Features and training targets from a Dataset, an AugmentedSet or an (X, y) pair."""
    if isinstance(train, tuple):
        return train
    targets = getattr(train, "targets", None)
    return train.features, (targets if targets is not None else train.labels)


def train_logistic(train, cfg: TrainConfig | None = None) -> LogisticRegressionGD:
    cfg = cfg or TrainConfig()
    X, y = _xy(train)
    y = np.asarray(y)
    if y.ndim == 2 and not cfg.soft_label_support:
        raise ConfigError("soft labels given but soft_label_support is off")
    model = LogisticRegressionGD(cfg.l2_strength, cfg.learning_rate, cfg.max_iterations, cfg.tolerance)
    return model.fit(X, y)


def train_svm(train, cfg: TrainConfig | None = None) -> KernelSVC:
    cfg = cfg or TrainConfig()
    X, y = _xy(train)
    model = KernelSVC(cfg.svm_c, cfg.svm_gamma, cfg.svm_tolerance, cfg.svm_max_pair_updates)
    return model.fit(X, y)


def train_softmax_head(train, cfg: TrainConfig | None = None, n_classes: int | None = None) -> SoftmaxHead:
    cfg = cfg or TrainConfig()
    X, y = _xy(train)
    y = np.asarray(y)
    if y.ndim == 2 and not cfg.soft_label_support:
        raise ConfigError("soft labels given but soft_label_support is off")
    if n_classes is None:
        n_classes = getattr(train, "num_classes", None)
    model = SoftmaxHead(cfg.l2_strength, cfg.learning_rate, cfg.max_iterations, cfg.tolerance, n_classes)
    return model.fit(X, y)


class BinaryPrediction(NamedTuple):
    label: int
    score: float


class HeadPrediction(NamedTuple):
    label: int
    logits: np.ndarray


def predict_logistic(model: LogisticRegressionGD, x) -> BinaryPrediction:
    x = as_float_vector(x, model.n_features_in_)
    score = ce_sum(x * model.coef_) + model.intercept_
    return BinaryPrediction(int(score >= 0), score)


def predict_svm(model: KernelSVC, x) -> BinaryPrediction:
    x = as_float_vector(x, model.n_features_in_)
    k = _rbf_block(x[None, :], model.support_vectors_, model.gamma_)[0]
    value = ce_sum(k * model.dual_coef_) + model.intercept_
    return BinaryPrediction(int(value > 0), value)


def predict_head(head: SoftmaxHead, fe) -> HeadPrediction:
    fe = as_float_vector(fe, head.n_features_in_)
    logits = ce_row_sums(head.coef_ * fe) + head.intercept_
    return HeadPrediction(int(np.argmax(logits)), logits)


# ---------------------------------------------------------------------------
# serialisation


def model_to_dict(model) -> dict:
    if isinstance(model, KernelSVC):
        return {
            "SV": model.support_vectors_.tolist(),
            "alpha": model.dual_coef_.tolist(),
            "b": model.intercept_,
            "gamma": model.gamma_,
        }
    if isinstance(model, SoftmaxHead):
        return {"W": model.coef_.tolist(), "b": model.intercept_.tolist()}
    if isinstance(model, LogisticRegressionGD):
        return {"W": model.coef_.tolist(), "b": model.intercept_}
    raise TypeError(f"cannot serialise {type(model).__name__}")


def model_from_dict(doc: dict):
    """Inverse of :func:`model_to_dict`; the model kind is inferred from the keys."""
    if not isinstance(doc, dict):
        raise DataError("model document must be a JSON object")
    try:
        if "SV" in doc:
            return KernelSVC.from_weights(doc["SV"], doc["alpha"], doc["b"], doc["gamma"])
        W = doc["W"]
        if W and isinstance(W[0], list):
            return SoftmaxHead.from_weights(W, doc["b"])
        return LogisticRegressionGD.from_weights(W, doc["b"])
    except KeyError as exc:
        raise DataError(f"model document is missing key {exc}") from None


def save_model(model, path) -> None:
    # json writes floats with repr(), the shortest round-tripping form
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
