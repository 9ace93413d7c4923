"""Classical comparison models: logistic regression, linear SVM, k-NN.

All three standardize features internally using training statistics, so
callers pass raw-scale datasets. Scores are rank-valid for AUC: logistic
emits probabilities, the SVM emits raw decision values, k-NN emits the
positive fraction among neighbors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .codemodel import PredictionVector
from .dataset import Dataset

DEFAULT_LOGISTIC_L2 = 1e-4
DEFAULT_LOGISTIC_TOL = 1e-8
DEFAULT_LOGISTIC_MAX_ITERS = 10_000
DEFAULT_SVM_C = 1.0
DEFAULT_SVM_EPOCHS = 200
DEFAULT_KNN_K = 5

MODEL_KINDS = ("logistic", "svm")


@dataclass(frozen=True)
class LinearModel:
    kind: str
    weights: np.ndarray
    bias: float
    trained_on: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        weights = np.asarray(self.weights, dtype=float)
        means = np.asarray(self.means, dtype=float)
        sds = np.asarray(self.sds, dtype=float)
        d = len(self.trained_on)
        if weights.shape != (d,) or means.shape != (d,) or sds.shape != (d,):
            raise ValueError("parameter shapes disagree with feature list")
        if not np.all(sds > 0):
            raise ValueError("standard deviations must be positive")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sds", sds)

    def decision_values(self, ds: Dataset) -> np.ndarray:
        if ds.feature_names != self.trained_on:
            raise ValueError("dataset features do not match the fitted model")
        z = (ds.rows - self.means) / self.sds
        return z @ self.weights + self.bias

    def scores(self, ds: Dataset) -> PredictionVector:
        z = self.decision_values(ds)
        values = _sigmoid(z) if self.kind == "logistic" else z
        return PredictionVector(values, ds.n_rows)

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "standardization": {
                "means": [float(m) for m in self.means],
                "sds": [float(s) for s in self.sds],
            },
            "feature_names": list(self.trained_on),
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LinearModel":
        payload = json.loads(text)
        return cls(
            kind=payload["kind"],
            weights=np.array(payload["weights"], dtype=float),
            bias=float(payload["bias"]),
            trained_on=tuple(payload["feature_names"]),
            means=np.array(payload["standardization"]["means"], dtype=float),
            sds=np.array(payload["standardization"]["sds"], dtype=float),
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _standardization(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = rows.mean(axis=0)
    sds = rows.std(axis=0)
    sds = np.where(sds > 0, sds, 1.0)  # constant columns pass through
    return means, sds


def _require_both_classes(ds: Dataset) -> None:
    if len(np.unique(ds.labels)) < 2:
        raise ValueError("training set needs both classes")


def logistic_objective(weights: np.ndarray, bias: float, rows: np.ndarray,
                       labels: np.ndarray, l2: float) -> float:
    """Mean logistic loss plus (l2/2)·||w||^2; the bias is unpenalized."""
    z = rows @ weights + bias
    # softplus(z) - y*z, stable for large |z|
    loss = np.mean(np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - labels * z)
    return float(loss + 0.5 * l2 * float(weights @ weights))


def logistic_gradient(weights: np.ndarray, bias: float, rows: np.ndarray,
                      labels: np.ndarray, l2: float) -> tuple[np.ndarray, float]:
    z = rows @ weights + bias
    residual = _sigmoid(z) - labels
    grad_w = rows.T @ residual / len(labels) + l2 * weights
    grad_b = float(residual.mean())
    return grad_w, grad_b


def fit_logistic(train: Dataset, l2: float = DEFAULT_LOGISTIC_L2,
                 max_iters: int = DEFAULT_LOGISTIC_MAX_ITERS,
                 tol: float = DEFAULT_LOGISTIC_TOL) -> LinearModel:
    """Full-batch gradient descent with Armijo backtracking on standardized
    features. Stops when the gradient infinity-norm drops below tol."""
    _require_both_classes(train)
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    means, sds = _standardization(train.rows)
    rows = (train.rows - means) / sds
    labels = train.labels.astype(float)

    w = np.zeros(train.n_features)
    b = 0.0
    f = logistic_objective(w, b, rows, labels, l2)
    for _ in range(max_iters):
        grad_w, grad_b = logistic_gradient(w, b, rows, labels, l2)
        grad_sq = float(grad_w @ grad_w) + grad_b * grad_b
        if max(np.max(np.abs(grad_w)), abs(grad_b)) < tol:
            break
        step = 1.0
        for _ in range(60):
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            f_new = logistic_objective(w_new, b_new, rows, labels, l2)
            if f_new <= f - 1e-4 * step * grad_sq:
                break
            step *= 0.5
        else:
            break  # no acceptable step left, gradient is numerically flat
        w, b, f = w_new, b_new, f_new
    return LinearModel("logistic", w, b, train.feature_names, means, sds)


def svm_objective(weights: np.ndarray, bias: float, rows: np.ndarray,
                  labels_pm: np.ndarray, c: float) -> float:
    """(1/2)||w||^2 + c * mean hinge loss, labels in {-1, +1}."""
    margins = labels_pm * (rows @ weights + bias)
    hinge = np.maximum(0.0, 1.0 - margins)
    return float(0.5 * float(weights @ weights) + c * hinge.mean())


def fit_linear_svm(train: Dataset, c: float = DEFAULT_SVM_C,
                   epochs: int = DEFAULT_SVM_EPOCHS, seed: int = 0,
                   trace: list | None = None) -> LinearModel:
    """Subgradient descent with step 1/(lambda*t), lambda = 1/c, visiting
    rows in a seeded per-epoch permutation. The returned parameters are the
    average over all steps, which is what makes the objective settle; pass a
    list as trace to collect the averaged (weights, bias) after each epoch."""
    _require_both_classes(train)
    if c <= 0:
        raise ValueError("c must be positive")
    means, sds = _standardization(train.rows)
    rows = (train.rows - means) / sds
    labels_pm = np.where(train.labels == 1, 1.0, -1.0)
    n = train.n_rows
    lam = 1.0 / c
    rng = np.random.default_rng(seed)

    w = np.zeros(train.n_features)
    b = 0.0
    w_sum = np.zeros_like(w)
    b_sum = 0.0
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            step = 1.0 / (lam * t)
            margin = labels_pm[i] * (rows[i] @ w + b)
            w *= 1.0 - step * lam
            if margin < 1.0:
                w += step * labels_pm[i] * rows[i]
                b += step * labels_pm[i]  # bias unregularized
            w_sum += w
            b_sum += b
        if trace is not None:
            trace.append((w_sum / t, b_sum / t))
    return LinearModel("svm", w_sum / t, b_sum / t, train.feature_names, means, sds)


def knn_scores(train: Dataset, queries: Dataset,
               k: int = DEFAULT_KNN_K) -> PredictionVector:
    """Fraction of label-1 rows among the k nearest neighbors by Euclidean
    distance on standardized features; ties go to the lower training index."""
    if queries.n_rows == 0:
        raise ValueError("query set is empty")
    if not 1 <= k <= train.n_rows:
        raise ValueError(f"k must be in [1, {train.n_rows}]")
    if queries.feature_names != train.feature_names:
        raise ValueError("query features do not match the training set")
    means, sds = _standardization(train.rows)
    rows = (train.rows - means) / sds
    q = (queries.rows - means) / sds
    # squared distances suffice for ranking
    d2 = ((q[:, None, :] - rows[None, :, :]) ** 2).sum(axis=2)
    values = np.empty(queries.n_rows)
    for i in range(queries.n_rows):
        order = np.argsort(d2[i], kind="stable")  # stable sort = index tie-break
        values[i] = train.labels[order[:k]].mean()
    return PredictionVector(values, queries.n_rows)
