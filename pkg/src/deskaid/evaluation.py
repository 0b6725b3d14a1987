"""Classification metrics and feature diagnostics."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConstantColumn, LengthMismatch, SingleClassData, TooFewRows,
                     UnsupportedModelKind)

# VIF reported for (numerically) perfect collinearity
VIF_INFINITY = float("inf")


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    accuracy: float
    per_class: dict[str, ClassMetrics]
    macro_f1: float
    confusion: list[list[int]]  # [[tn, fp], [fn, tp]]
    n_test: int
    class_balance: float  # fraction of hazard labels
    threshold: float = 0.5
    roc_points: list[tuple[float, float, float]] = field(default_factory=list)  # (fpr, tpr, threshold)
    auc: float | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d["roc_points"] = [list(p) for p in self.roc_points]
        return d


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def classification_report(labels, probabilities, threshold: float = 0.5) -> EvalReport:
    """Binary metrics at ``threshold`` (probability >= threshold predicts hazard).

    A class with no true and no predicted members gets precision, recall and
    F1 of 0, which keeps macro-F1 defined on single-class test grids.
    """
    y = np.asarray(labels).astype(np.int64).ravel()
    p = np.asarray(probabilities, dtype=float).ravel()
    if len(y) != len(p):
        raise LengthMismatch(f"{len(y)} labels vs {len(p)} probabilities")
    if len(y) == 0:
        raise LengthMismatch("empty inputs")
    pred = (p >= threshold).astype(np.int64)
    tp = int(((pred == 1) & (y == 1)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    per_class = {}
    for name, t, f_pos, f_neg, support in (("clear", tn, fn, fp, tn + fp), ("hazard", tp, fp, fn, tp + fn)):
        precision = t / (t + f_pos) if t + f_pos else 0.0
        recall = t / (t + f_neg) if t + f_neg else 0.0
        per_class[name] = ClassMetrics(precision, recall, _f1(precision, recall), support)
    macro = (per_class["clear"].f1 + per_class["hazard"].f1) / 2.0
    return EvalReport((tp + tn) / len(y), per_class, macro, [[tn, fp], [fn, tp]], len(y),
                      float(y.mean()), threshold)


def roc_auc(labels, probabilities):
    """ROC points ``(fpr, tpr, threshold)`` and trapezoidal AUC.

    Tied scores move the curve in one diagonal step, which makes the AUC
    equal to the Mann-Whitney statistic with ties counted as one half.
    """
    y = np.asarray(labels).astype(np.int64).ravel()
    s = np.asarray(probabilities, dtype=float).ravel()
    if len(y) != len(s):
        raise LengthMismatch(f"{len(y)} labels vs {len(s)} scores")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassData("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(s_sorted) - 1]
    tps = np.cumsum(y_sorted)[last_of_group]
    fps = (last_of_group + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    thresholds = np.r_[np.inf, s_sorted[last_of_group]]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    points = [(float(a), float(b), float(t)) for a, b, t in zip(fpr, tpr, thresholds)]
    return points, auc


def evaluate(labels, probabilities, threshold: float = 0.5) -> EvalReport:
    report = classification_report(labels, probabilities, threshold)
    y = np.asarray(labels)
    if len(np.unique(y)) == 2:
        report.roc_points, report.auc = roc_auc(labels, probabilities)
    return report


def _columns(matrix, include_label: bool):
    X = np.asarray(matrix.X, dtype=float)
    names = list(matrix.schema.names)
    if include_label:
        X = np.column_stack([X, np.asarray(matrix.labels, dtype=float)])
        names.append("label")
    return X, names


def correlation_matrix(matrix, include_label: bool = False):
    """Pearson correlations of all feature columns (categoricals as codes).

    Returns ``(R, names)``.  Constant columns correlate 0 with everything
    else, with 1 on the diagonal.
    """
    X, names = _columns(matrix, include_label)
    if len(X) < 2:
        raise TooFewRows("correlation needs at least 2 rows")
    C = X - X.mean(axis=0)
    sd = np.sqrt((C * C).sum(axis=0))
    constant = sd == 0
    if constant.any():
        warnings.warn(f"constant columns get zero correlation: {[n for n, c in zip(names, constant) if c]}",
                      RuntimeWarning, stacklevel=2)
    Cn = C / np.where(constant, 1.0, sd)
    R = Cn.T @ Cn
    R = (R + R.T) / 2.0
    np.fill_diagonal(R, 1.0)
    R[constant, :] = 0.0
    R[:, constant] = 0.0
    R[constant, constant] = 1.0
    return np.clip(R, -1.0, 1.0), names


def vif(matrix) -> dict[str, float]:
    """Variance inflation factor per feature via QR least squares.

    ``R^2 >= 1 - 1e-12`` is reported as ``inf``.
    """
    X = np.asarray(matrix.X, dtype=float)
    n, p = X.shape
    names = matrix.schema.names
    if n < p + 2:
        raise TooFewRows(f"VIF needs at least {p + 2} rows, got {n}")
    for j in range(p):
        if np.ptp(X[:, j]) == 0:
            raise ConstantColumn(names[j])
    out = {}
    for j in range(p):
        target = X[:, j]
        A = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        Q, R = np.linalg.qr(A)
        diag = np.abs(np.diag(R))
        keep = diag > 1e-10 * max(diag.max(), 1.0)
        if keep.all():
            coef = np.linalg.solve(R, Q.T @ target)
            fitted = A @ coef
        else:
            # rank-deficient predictors: project onto the independent columns
            Q2, _ = np.linalg.qr(A[:, keep])
            fitted = Q2 @ (Q2.T @ target)
        resid = target - fitted
        centered = target - target.mean()
        r2 = 1.0 - float(resid @ resid) / float(centered @ centered)
        out[names[j]] = VIF_INFINITY if r2 >= 1.0 - 1e-12 else 1.0 / (1.0 - r2)
    return out


def feature_importance(model) -> list[tuple[str, float]]:
    """Mean-decrease-in-impurity importances of a random forest, descending."""
    if model.kind != "RF":
        raise UnsupportedModelKind(f"feature importance needs an RF model, got {model.kind}")
    imp = np.asarray(model.extras["feature_importance"], dtype=float)
    names = list(model.extras.get("feature_names") or [f"x{j}" for j in range(len(imp))])
    order = sorted(range(len(imp)), key=lambda j: (-imp[j], j))
    return [(names[j], float(imp[j])) for j in order]


def write_report_json(path, report: EvalReport, **extra) -> None:
    doc = report.to_json()
    doc.update(extra)
    Path(path).write_text(json.dumps(_finite(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_roc_csv(path, roc_points) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for fpr, tpr, t in roc_points:
            w.writerow([repr(t) if np.isfinite(t) else "inf", repr(fpr), repr(tpr)])


def _finite(obj):
    """JSON has no infinity; encode it as the string "inf"."""
    if isinstance(obj, float) and not np.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(_finite(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
