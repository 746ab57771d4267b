"""Scikit-learn style estimators wrapping the functional core.

``SubspaceTransformer`` turns raw D x N sequences into SubspaceRep objects;
``GrassmannSVC`` classifies subspaces with any of the kernel families and
the in-package SMO solver. Both follow the fit/transform/predict and
get_params conventions, so they compose with sklearn pipelines and model
selection utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .harness import truncate_latency
from .kernels import KernelSpec, cross_gram, gram
from .subspace import SubspaceRep, build_subspace, check_sequence, truncate

__all__ = ["SubspaceTransformer", "GrassmannSVC"]


def _as_sequences(X) -> list[np.ndarray]:
    if len(X) == 0:
        raise ValueError("empty input")
    seqs = [check_sequence(x, name=f"X[{i}]") for i, x in enumerate(X)]
    d0 = seqs[0].shape[0]
    for i, s in enumerate(seqs):
        if s.shape[0] != d0:
            raise ValueError(f"X[{i}] has {s.shape[0]} rows, expected {d0}")
    return seqs


def _as_reps(X) -> list[SubspaceRep]:
    if len(X) == 0:
        raise ValueError("empty input")
    if not all(isinstance(x, SubspaceRep) for x in X):
        raise TypeError("expected a list of SubspaceRep; raw sequences need a rank")
    d0 = X[0].ambient_dim
    for i, rep in enumerate(X):
        if rep.ambient_dim != d0:
            raise ValueError(f"X[{i}] has ambient dim {rep.ambient_dim}, expected {d0}")
    return list(X)


class SubspaceTransformer(TransformerMixin, BaseEstimator):
    """Map sequences to their leading singular subspaces.

    Parameters
    ----------
    rank : int
        Number of leading singular directions to keep. Clamped per sample
        to min(rank, D, N); mixing sequence lengths below rank therefore
        yields mixed subspace dimensions.
    lambda_m : float
        Threshold truncation applied after rank truncation; 0 keeps all.
    latency_cap : int or None
        If set, sequences are truncated to their first latency_cap frames
        before the SVD.
    """

    def __init__(self, rank: int = 5, lambda_m: float = 0.0, latency_cap: int | None = None):
        self.rank = rank
        self.lambda_m = lambda_m
        self.latency_cap = latency_cap

    def fit(self, X, y=None):
        seqs = _as_sequences(X)
        self.ambient_dim_ = seqs[0].shape[0]
        return self

    def transform(self, X) -> list[SubspaceRep]:
        if not hasattr(self, "ambient_dim_"):
            raise NotFittedError("SubspaceTransformer is not fitted")
        seqs = _as_sequences(X)
        out = []
        for seq in seqs:
            if seq.shape[0] != self.ambient_dim_:
                raise ValueError("ambient dimension changed between fit and transform")
            if self.latency_cap is not None:
                seq = truncate_latency(seq, self.latency_cap)
            r = min(int(self.rank), seq.shape[0], seq.shape[1])
            rep = build_subspace(seq, r)
            if self.lambda_m:
                rep = truncate(rep, self.lambda_m)
            out.append(rep)
        return out


class GrassmannSVC(ClassifierMixin, BaseEstimator):
    """One-vs-one SVM on subspaces with a Grassmann kernel.

    Parameters
    ----------
    kernel : str
        One of "projection", "binet_cauchy", "scaled_projection", "dg_pg",
        "dg_dir".
    C : float
        Box constraint of the dual.
    epsilon : float or None
        Disturbance strength; required by (and only valid for) dg_pg.
    lambda_m : float or None
        Truncation threshold; required by (and only valid for) dg_dir.
    rank : int or None
        When given, raw sequences are accepted and converted with
        SubspaceTransformer(rank); otherwise X must already contain
        SubspaceRep objects.
    """

    def __init__(self, kernel: str = "projection", C: float = 1.0,
                 epsilon: float | None = None, lambda_m: float | None = None,
                 rank: int | None = None):
        self.kernel = kernel
        self.C = C
        self.epsilon = epsilon
        self.lambda_m = lambda_m
        self.rank = rank

    def _spec(self) -> KernelSpec:
        return KernelSpec(family=self.kernel, epsilon=self.epsilon, lambda_m=self.lambda_m)

    def _coerce(self, X) -> list[SubspaceRep]:
        if self.rank is not None and not (len(X) and isinstance(X[0], SubspaceRep)):
            transformer = SubspaceTransformer(rank=self.rank)
            return transformer.fit(X).transform(X)
        return _as_reps(X)

    def fit(self, X, y):
        from .svm import train_multiclass

        spec = self._spec()
        reps = self._coerce(X)
        y = np.asarray(y)
        if y.shape != (len(reps),):
            raise ValueError("y length does not match X")
        self.train_reps_ = reps
        self.gram_ = gram(reps, spec)
        self.model_ = train_multiclass(self.gram_.values, y, self.C)
        self.classes_ = np.asarray(self.model_.classes)
        return self

    def predict(self, X):
        from .svm import predict as mm_predict

        if not hasattr(self, "model_"):
            raise NotFittedError("GrassmannSVC is not fitted")
        reps = self._coerce(X)
        rows = cross_gram(reps, self.train_reps_, self._spec())
        return mm_predict(self.model_, rows)
