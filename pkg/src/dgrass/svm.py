"""Dual kernel SVM trained by SMO, plus one-vs-one multiclass.

The solver works purely on precomputed kernel matrices: training never sees
feature vectors, only Gram blocks, which is what makes it usable with the
Grassmann kernels. Working-pair selection is max-violating-pair on the KKT
conditions; the stopping gap, iteration cap, and jitter policy are fixed
module constants.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BinaryProblem",
    "SvmModel",
    "MulticlassModel",
    "SmoConvergenceError",
    "train_binary",
    "decision",
    "dual_objective",
    "train_multiclass",
    "predict",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

logger = logging.getLogger(__name__)

KKT_TOL = 1e-3
MAX_PAIR_UPDATES = 10_000_000
SUPPORT_TOL = 1e-9
# Gram matrices here are PSD in exact arithmetic; the ridge only absorbs
# rounding. Anything needing more than 1e-8*max is a caller bug, not noise.
JITTER_SCALE = 1e-8


class SmoConvergenceError(RuntimeError):
    """Raised when the solver hits the update cap; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class BinaryProblem:
    """Kernel matrix, +-1 labels, and box constraint for one binary task."""

    gram: np.ndarray
    labels: np.ndarray
    C: float


@dataclass(frozen=True)
class SvmModel:
    """Solved dual: alphas in [0, C], bias, and bookkeeping.

    ``labels`` are the +-1 training labels (the decision function needs
    them alongside alphas), ``indices`` optionally maps the problem's rows
    back to positions in an enclosing training set.
    """

    alphas: np.ndarray
    bias: float
    support_ids: np.ndarray
    class_pair: tuple
    labels: np.ndarray
    indices: np.ndarray | None = field(default=None)


def _validate_problem(p: BinaryProblem) -> tuple[np.ndarray, np.ndarray, float]:
    k = np.asarray(p.gram, dtype=float)
    y = np.asarray(p.labels, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"gram must be square, got shape {k.shape}")
    if not np.isfinite(k).all():
        raise ValueError("gram contains non-finite entries")
    if y.shape != (k.shape[0],):
        raise ValueError("labels length does not match gram size")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +-1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")
    if not p.C > 0:
        raise ValueError(f"C must be positive, got {p.C}")
    return k, y, float(p.C)


def _stabilize(k: np.ndarray) -> np.ndarray:
    eigs = np.linalg.eigvalsh(0.5 * (k + k.T))
    top = max(float(eigs[-1]), 0.0)
    if top == 0.0:
        return k
    if float(eigs[0]) < -JITTER_SCALE * top:
        logger.warning(
            "gram min eigenvalue %.3e below -%.0e*max; adding ridge", eigs[0], JITTER_SCALE
        )
        return k + (JITTER_SCALE * top) * np.eye(k.shape[0])
    return k


def dual_objective(gram: np.ndarray, labels: np.ndarray, alphas: np.ndarray) -> float:
    """Dual value sum(alpha) - 1/2 alpha^T Q alpha with Q = yy^T o K."""
    ay = alphas * labels
    return float(alphas.sum() - 0.5 * (ay @ np.asarray(gram, dtype=float) @ ay))


def train_binary(p: BinaryProblem, class_pair: tuple = (1, -1),
                 indices: np.ndarray | None = None) -> SvmModel:
    """Solve the dual with SMO max-violating-pair updates.

    Stops when the KKT gap m(alpha) - M(alpha) drops below KKT_TOL; raises
    SmoConvergenceError with best-so-far diagnostics if the pair-update cap
    is hit first.
    """
    k, y, c = _validate_problem(p)
    k = _stabilize(k)
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a^T Q a - e^T a at a = 0
    updates = 0
    while True:
        f = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(f[up])])
        j = int(np.flatnonzero(low)[np.argmin(f[low])])
        gap = f[i] - f[j]
        if gap < KKT_TOL:
            break
        if updates >= MAX_PAIR_UPDATES:
            raise SmoConvergenceError(
                f"SMO hit the {MAX_PAIR_UPDATES} pair-update cap with KKT gap {gap:.3e}",
                diagnostics={
                    "updates": updates,
                    "kkt_gap": float(gap),
                    "objective": dual_objective(k, y, alpha),
                },
            )
        # step alpha_i += y_i t, alpha_j -= y_j t: preserves sum(y*alpha),
        # ascends the dual at rate gap with curvature Kii + Kjj - 2Kij
        quad = k[i, i] + k[j, j] - 2.0 * k[i, j]
        t_box = min(
            c - alpha[i] if y[i] > 0 else alpha[i],
            alpha[j] if y[j] > 0 else c - alpha[j],
        )
        t = t_box if quad <= 1e-12 else min(gap / quad, t_box)
        if t <= 0.0:
            break  # numerically stuck at the box; gap is already ~tol
        da_i = y[i] * t
        da_j = -y[j] * t
        alpha[i] = min(max(alpha[i] + da_i, 0.0), c)
        alpha[j] = min(max(alpha[j] + da_j, 0.0), c)
        grad += y * (k[:, i] * (y[i] * da_i) + k[:, j] * (y[j] * da_j))
        updates += 1
    # bias from KKT: g_i is the bias that makes point i exactly on target
    f_val = (alpha * y) @ k
    g = y - f_val
    free = (alpha > SUPPORT_TOL) & (alpha < c - SUPPORT_TOL)
    if free.any():
        bias = float(g[free].mean())
    else:
        lo_set = ((alpha <= SUPPORT_TOL) & (y > 0)) | ((alpha >= c - SUPPORT_TOL) & (y < 0))
        hi_set = ((alpha <= SUPPORT_TOL) & (y < 0)) | ((alpha >= c - SUPPORT_TOL) & (y > 0))
        lo = g[lo_set].max() if lo_set.any() else -np.inf
        hi = g[hi_set].min() if hi_set.any() else np.inf
        if not np.isfinite(lo):
            bias = float(hi)
        elif not np.isfinite(hi):
            bias = float(lo)
        else:
            bias = float(0.5 * (lo + hi))
    return SvmModel(
        alphas=alpha,
        bias=bias,
        support_ids=np.flatnonzero(alpha > SUPPORT_TOL),
        class_pair=class_pair,
        labels=y,
        indices=None if indices is None else np.asarray(indices, dtype=int),
    )


def decision(model: SvmModel, kernel_row: np.ndarray) -> float:
    """sum_i alpha_i y_i kappa(x_i, x) + bias for one evaluation point."""
    row = np.asarray(kernel_row, dtype=float)
    if row.shape != model.alphas.shape:
        raise ValueError(
            f"kernel row length {row.shape} does not match training size {model.alphas.shape}"
        )
    return float((model.alphas * model.labels) @ row + model.bias)


@dataclass(frozen=True)
class MulticlassModel:
    """One-vs-one ensemble: k(k-1)/2 binary models over sorted class labels."""

    models: tuple[SvmModel, ...]
    classes: tuple
    n_train: int


def train_multiclass(gram: np.ndarray, labels, C: float) -> MulticlassModel:
    """Train all unordered class pairs on sub-blocks of one Gram matrix."""
    k = np.asarray(gram, dtype=float)
    labels = np.asarray(labels)
    if labels.shape != (k.shape[0],):
        raise ValueError("labels length does not match gram size")
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    models = []
    for a, b in itertools.combinations(classes, 2):
        idx = np.flatnonzero((labels == a) | (labels == b))
        y = np.where(labels[idx] == a, 1.0, -1.0)
        sub = k[np.ix_(idx, idx)]
        models.append(
            train_binary(BinaryProblem(gram=sub, labels=y, C=C), class_pair=(a, b), indices=idx)
        )
    return MulticlassModel(models=tuple(models), classes=tuple(classes), n_train=len(labels))


def predict(mm: MulticlassModel, kernel_rows: np.ndarray):
    """Majority vote over pairwise decisions for each row of test kernels.

    kernel_rows[t, i] = kappa(test_t, train_i) over the full training set.
    Ties go to the largest summed |decision| margin among the tied classes,
    then to the smallest label in sort order.
    """
    rows = np.asarray(kernel_rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != mm.n_train:
        raise ValueError(
            f"kernel rows have {rows.shape[1]} columns, expected {mm.n_train} training instances"
        )
    n_test = rows.shape[0]
    k = len(mm.classes)
    class_pos = {c: i for i, c in enumerate(mm.classes)}
    votes = np.zeros((n_test, k))
    margins = np.zeros((n_test, k))
    for model in mm.models:
        ia, ib = class_pos[model.class_pair[0]], class_pos[model.class_pair[1]]
        d = rows[:, model.indices] @ (model.alphas * model.labels) + model.bias
        toward_a = d > 0
        votes[toward_a, ia] += 1
        votes[~toward_a, ib] += 1
        margins[toward_a, ia] += np.abs(d[toward_a])
        margins[~toward_a, ib] += np.abs(d[~toward_a])
    out = []
    for t in range(n_test):
        best = max(range(k), key=lambda i: (votes[t, i], margins[t, i], -i))
        out.append(mm.classes[best])
    return np.asarray(out)


def model_to_dict(mm: MulticlassModel, kernel_spec: dict | None = None) -> dict:
    """JSON-ready encoding; kernel_spec is echoed verbatim when given."""
    doc = {
        "classes": list(mm.classes),
        "n_train": mm.n_train,
        "models": [
            {
                "class_pair": list(m.class_pair),
                "alphas": m.alphas.tolist(),
                "bias": m.bias,
                "support_ids": m.support_ids.tolist(),
                "labels": m.labels.tolist(),
                "indices": None if m.indices is None else m.indices.tolist(),
            }
            for m in mm.models
        ],
    }
    if kernel_spec is not None:
        doc["kernel"] = dict(kernel_spec)
    return doc


def model_from_dict(doc: dict) -> MulticlassModel:
    models = tuple(
        SvmModel(
            alphas=np.asarray(m["alphas"], dtype=float),
            bias=float(m["bias"]),
            support_ids=np.asarray(m["support_ids"], dtype=int),
            class_pair=tuple(m["class_pair"]),
            labels=np.asarray(m["labels"], dtype=float),
            indices=None if m["indices"] is None else np.asarray(m["indices"], dtype=int),
        )
        for m in doc["models"]
    )
    return MulticlassModel(models=models, classes=tuple(doc["classes"]), n_train=int(doc["n_train"]))


def save_model(mm: MulticlassModel, path, kernel_spec: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(mm, kernel_spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> MulticlassModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
