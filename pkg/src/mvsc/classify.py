"""Classifiers over learned sparse codes, plus recognition reporting.

Both classifiers are linear one-vs-rest scorers over code vectors:
ridge-regularized least squares onto one-hot targets, and a linear SVM
trained by seeded stochastic subgradient descent. Prediction is argmax
of the class scores with ties broken toward the lowest class id.

Inputs are sample-major: X has shape (n_samples, n_features).
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DimensionError, NumericError, ParameterError
from .validation import check_matrix, check_scalar

__all__ = [
    "LeastSquaresClassifier",
    "LinearSVMClassifier",
    "RecognitionReport",
    "recognition_report",
    "format_report_table",
    "parse_report_csv",
    "format_confusion",
]


def _check_training_set(X, y):
    X = check_matrix(X, "X")
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != X.shape[0]:
        raise DimensionError(
            f"y must hold one label per sample: X has {X.shape[0]} rows, y has shape {y.shape}"
        )
    classes, y_idx = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ParameterError(
            f"training labels must span at least two classes, got {len(classes)}"
        )
    return X, classes, y_idx


def _augment(X):
    # constant-1 feature carries the bias
    return np.hstack([X, np.ones((X.shape[0], 1))])


class LeastSquaresClassifier(BaseEstimator, ClassifierMixin):
    """One-vs-rest least squares onto one-hot targets.

    Solves the ridge-regularized normal equations for a weight matrix
    and per-class biases; ``ridge`` defaults to 1e-6 which changes
    well-conditioned solutions only at round-off level but keeps
    duplicate-feature training sets solvable.
    """

    def __init__(self, ridge=1e-6):
        self.ridge = ridge

    def fit(self, X, y):
        ridge = check_scalar(self.ridge, "ridge", minimum=0.0)
        X, classes, y_idx = _check_training_set(X, y)
        a = _augment(X)
        targets = np.zeros((X.shape[0], len(classes)))
        targets[np.arange(X.shape[0]), y_idx] = 1.0
        gram = a.T @ a + ridge * np.eye(a.shape[1])
        if ridge == 0.0:
            # unregularized systems can be singular (duplicate features);
            # fail with advice instead of returning garbage
            if np.linalg.cond(gram) > 1e12:
                raise NumericError(
                    "normal equations are numerically singular; set ridge > 0"
                )
        try:
            solution = np.linalg.solve(gram, a.T @ targets)
        except np.linalg.LinAlgError as exc:
            raise NumericError(
                f"normal equations could not be solved ({exc}); set ridge > 0"
            ) from None
        self.classes_ = classes
        self.weights_ = solution[:-1].T
        self.biases_ = solution[-1].copy()
        return self

    def decision_function(self, X):
        check_is_fitted(self, "weights_")
        X = check_matrix(X, "X", allow_empty=True)
        if X.shape[1] != self.weights_.shape[1]:
            raise DimensionError(
                f"X has {X.shape[1]} features, model expects {self.weights_.shape[1]}"
            )
        return X @ self.weights_.T + self.biases_

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


class LinearSVMClassifier(BaseEstimator, ClassifierMixin):
    """One-vs-rest linear SVM trained by seeded stochastic subgradient descent.

    Hinge loss with L2 regularization ``1 / (C * n_samples)``, learning
    rate 1/(reg * t), and projection onto the ball of radius
    ``1/sqrt(reg)`` for stability. Each class trains independently with
    its own seeded sample order derived from (seed, class index), so
    runs are deterministic and classes could train concurrently.
    """

    def __init__(self, C=1.0, epochs=200, seed=0):
        self.C = C
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y):
        c_value = check_scalar(self.C, "C", minimum=0.0, strict=True)
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ParameterError(f"epochs must be a positive integer, got {self.epochs!r}")
        X, classes, y_idx = _check_training_set(X, y)
        a = _augment(X)
        n, dim = a.shape
        reg = 1.0 / (c_value * n)
        radius = 1.0 / np.sqrt(reg)
        weights = np.zeros((len(classes), dim))
        for class_index in range(len(classes)):
            signs = np.where(y_idx == class_index, 1.0, -1.0)
            rng = np.random.default_rng([int(self.seed), class_index])
            w = np.zeros(dim)
            t = 0
            for _ in range(int(self.epochs)):
                for i in rng.permutation(n):
                    t += 1
                    eta = 1.0 / (reg * t)
                    margin = signs[i] * float(w @ a[i])
                    w *= 1.0 - eta * reg
                    if margin < 1.0:
                        w += (eta * signs[i]) * a[i]
                    nrm = float(np.linalg.norm(w))
                    if nrm > radius:
                        w *= radius / nrm
            weights[class_index] = w
        self.classes_ = classes
        self.weights_ = weights[:, :-1].copy()
        self.biases_ = weights[:, -1].copy()
        return self

    def decision_function(self, X):
        check_is_fitted(self, "weights_")
        X = check_matrix(X, "X", allow_empty=True)
        if X.shape[1] != self.weights_.shape[1]:
            raise DimensionError(
                f"X has {X.shape[1]} features, model expects {self.weights_.shape[1]}"
            )
        return X @ self.weights_.T + self.biases_

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


@dataclass(frozen=True)
class RecognitionReport:
    """Per-class and aggregate recognition rates, all in percent.

    ``per_class`` aligns with ``classes``; a class with no truth samples
    reports None. ``average`` is the unweighted mean over classes that
    do appear; ``overall`` pools all samples. ``confusion`` has truth in
    rows and prediction in columns, ordered like ``classes``.
    """

    classes: tuple
    confusion: np.ndarray
    per_class: tuple
    overall: float
    average: float
    n_samples: int


def recognition_report(predictions, truths, class_names=None):
    """Score predictions against truth labels.

    ``class_names`` fixes the class order (and may include classes with
    no truth samples); by default classes are the sorted union of the
    labels seen. Labels outside the class set raise.
    """
    predictions = list(predictions)
    truths = list(truths)
    if len(predictions) != len(truths):
        raise ParameterError(
            f"{len(predictions)} predictions against {len(truths)} truth labels"
        )
    if not truths:
        raise ParameterError("cannot score an empty evaluation set")
    if class_names is None:
        classes = sorted(set(truths) | set(predictions))
    else:
        classes = list(class_names)
        if len(set(classes)) != len(classes):
            raise ParameterError("class_names contains duplicates")
    position = {label: i for i, label in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=int)
    for pred, truth in zip(predictions, truths):
        if truth not in position:
            raise ParameterError(f"truth label {truth!r} not in the class set")
        if pred not in position:
            raise ParameterError(f"predicted label {pred!r} not in the class set")
        confusion[position[truth], position[pred]] += 1
    totals = confusion.sum(axis=1)
    hits = np.diag(confusion)
    per_class = tuple(
        100.0 * hits[i] / totals[i] if totals[i] else None for i in range(len(classes))
    )
    present = [rate for rate in per_class if rate is not None]
    overall = 100.0 * float(hits.sum()) / float(totals.sum())
    average = float(np.mean(present))
    return RecognitionReport(
        classes=tuple(classes),
        confusion=confusion,
        per_class=per_class,
        overall=overall,
        average=average,
        n_samples=int(totals.sum()),
    )


def _require_same_classes(rows):
    if not rows:
        raise ParameterError("report table needs at least one row")
    classes = rows[0][1].classes
    for label, report in rows:
        if report.classes != classes:
            raise ParameterError(f"report {label!r} uses a different class set")
    return classes


def format_report_table(rows, fmt="text"):
    """Render labeled reports as one table: per-class columns then 'Aver'.

    ``rows`` is a sequence of (label, RecognitionReport) sharing one
    class set. "text" prints aligned two-decimal percentages; "csv"
    emits full-precision values that parse back exactly.
    """
    rows = list(rows)
    classes = _require_same_classes(rows)
    headers = [str(c) for c in classes] + ["Aver"]
    if fmt == "csv":
        lines = ["method," + ",".join(headers)]
        for label, report in rows:
            cells = [
                "NA" if rate is None else repr(float(rate))
                for rate in report.per_class
            ]
            cells.append(repr(float(report.average)))
            lines.append(str(label) + "," + ",".join(cells))
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise ParameterError(f"format must be 'text' or 'csv', got {fmt!r}")
    label_width = max([len("Method")] + [len(str(label)) for label, _ in rows])
    cell_width = max([6] + [len(h) for h in headers])
    out = ["Method".ljust(label_width) + "".join(h.rjust(cell_width + 2) for h in headers)]
    for label, report in rows:
        cells = [
            "n/a" if rate is None else f"{rate:.2f}" for rate in report.per_class
        ]
        cells.append(f"{report.average:.2f}")
        out.append(
            str(label).ljust(label_width)
            + "".join(c.rjust(cell_width + 2) for c in cells)
        )
    return "\n".join(out) + "\n"


def parse_report_csv(text):
    """Parse format_report_table(..., 'csv') back into per-row rate dicts."""
    lines = [line for line in text.strip().splitlines() if line]
    if not lines or not lines[0].startswith("method,"):
        raise ParameterError("not a recognition report CSV")
    headers = lines[0].split(",")[1:]
    out = {}
    for line in lines[1:]:
        cells = line.split(",")
        label = cells[0]
        rates = {}
        for header, cell in zip(headers, cells[1:]):
            rates[header] = None if cell == "NA" else float(cell)
        out[label] = rates
    return out


def format_confusion(report, label=""):
    """Text confusion matrix, truth in rows, predictions in columns."""
    names = [str(c) for c in report.classes]
    width = max([5] + [len(n) for n in names])
    title = f"confusion ({label})" if label else "confusion"
    lines = [title, " " * (width + 2) + "".join(n.rjust(width + 2) for n in names)]
    for i, name in enumerate(names):
        row = "".join(str(int(v)).rjust(width + 2) for v in report.confusion[i])
        lines.append(name.rjust(width + 2) + row)
    return "\n".join(lines) + "\n"
