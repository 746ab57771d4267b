"""Subspace extraction from multivariate sequences.

A sequence of N feature frames is stored as a D x N matrix (columns are
frames). Its leading left singular vectors span the subspace that stands
in for the whole sequence downstream; the singular values, normalized by
the sum of the full spectrum, record each direction's share of energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SubspaceRep",
    "build_subspace",
    "truncate",
    "null_complement",
    "check_sequence",
]

# Relative cutoff defining the numerical rank inside build_subspace.
_RANK_RTOL = 1e-12


def check_sequence(seq: np.ndarray, name: str = "sequence") -> np.ndarray:
    """Validate and return a D x N sequence matrix as float64."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 2 or seq.shape[0] < 1 or seq.shape[1] < 1:
        raise ValueError(f"{name} must be a 2d D x N matrix, got shape {seq.shape}")
    if not np.isfinite(seq).all():
        raise ValueError(f"{name} contains non-finite entries")
    return seq


@dataclass(frozen=True)
class SubspaceRep:
    """Orthonormal basis of a subspace plus normalized singular values.

    ``basis`` is D x m with orthonormal columns. ``singvals`` are the
    matching singular values divided by the sum of the sequence's whole
    spectrum, so they are positive, descending, and sum to at most 1
    (strictly less after truncation).
    """

    basis: np.ndarray
    singvals: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def m(self) -> int:
        return self.basis.shape[1]


def build_subspace(seq: np.ndarray, r: int) -> SubspaceRep:
    """Top-r left singular subspace of a D x N sequence matrix.

    Keeps min(r, numerical rank) singular triplets. The normalizer is the
    full spectrum, not the kept part, so the kept values keep their
    interpretation as shares of total energy.
    """
    seq = check_sequence(seq)
    d, n = seq.shape
    r = int(r)
    if not 1 <= r <= min(d, n):
        raise ValueError(f"rank r={r} outside 1..min(D, N)={min(d, n)}")
    u, s, _ = np.linalg.svd(seq, full_matrices=False)
    total = float(s.sum())
    if total <= 0.0:
        raise ValueError("zero sequence has no subspace")
    rank = int(np.count_nonzero(s > _RANK_RTOL * s[0]))
    m = min(r, rank)
    basis = np.ascontiguousarray(u[:, :m])
    basis.flags.writeable = False
    singvals = s[:m] / total
    singvals.flags.writeable = False
    return SubspaceRep(basis=basis, singvals=singvals)


def truncate(rep: SubspaceRep, lambda_m: float) -> SubspaceRep:
    """Drop basis directions whose normalized singular value is <= lambda_m.

    The inequality is strict, and at least the leading direction is always
    retained: a classifier needs a nonempty representation.
    """
    lambda_m = float(lambda_m)
    if not 0.0 <= lambda_m < 1.0:
        raise ValueError(f"lambda_m must lie in [0, 1), got {lambda_m}")
    m = max(int(np.count_nonzero(rep.singvals > lambda_m)), 1)
    if m == rep.m:
        return rep
    return SubspaceRep(basis=rep.basis[:, :m], singvals=rep.singvals[:m])


def null_complement(rep: SubspaceRep) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement, shape D x (D - m).

    Stacking [basis | complement] gives a D x D orthogonal matrix.
    """
    d, m = rep.basis.shape
    if m >= d:
        raise ValueError("no null space: subspace fills the ambient space")
    q, _ = np.linalg.qr(rep.basis, mode="complete")
    return q[:, m:]
