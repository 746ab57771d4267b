"""Shared test fixtures: random subspace builders and dense feature-map oracles.

The dense maps here deliberately avoid the package's closed-form coefficient
algebra: they build the full D x D expectation matrix per basis direction,
using scipy's incomplete beta for the dropout route, so kernel tests compare
two independent derivations of the same quantity.
"""

import math

import numpy as np
from scipy.special import betainc as scipy_betainc

from dgrass import SubspaceRep, build_subspace


def random_seq(rng, d, n):
    return rng.standard_normal((d, n))


def random_rep(rng, d, m):
    """Full-rank random sequence, top-m subspace."""
    return build_subspace(rng.standard_normal((d, m + 5)), m)


def orthonormal(rng, d, m):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q[:, :m]


def rep_with_singvals(rng, d, singvals):
    """A SubspaceRep with a handpicked normalized spectrum."""
    singvals = np.asarray(singvals, dtype=float)
    return SubspaceRep(basis=orthonormal(rng, d, len(singvals)), singvals=singvals)


def dense_pg_map(rep, epsilon):
    """E[U~ U~^T] under the angular disturbance, built per basis direction.

    Each disturbed column contributes c_l u_l u_l^T plus an isotropic share
    (1 - c_l)/(D - m) of the null-space projector; the null projector is
    formed directly as I - U U^T.
    """
    u = rep.basis
    d, m = u.shape
    p_null = np.eye(d) - u @ u.T
    out = np.zeros((d, d))
    for lam, col in zip(rep.singvals, u.T):
        sig2 = -math.expm1(-(epsilon / d) * (1.0 / lam - 1.0))
        c = 1.0 / (sig2 * (d - m) + 1.0)
        out += c * np.outer(col, col) + (1.0 - c) / (d - m) * p_null
    return out


def dense_dir_map(rep, lambda_m):
    """sum_l p_l u_l u_l^T with p_l from scipy's regularized incomplete beta."""
    u = rep.basis
    out = np.zeros((u.shape[0],) * 2)
    for lam, col in zip(rep.singvals, u.T):
        if lam <= 0.0:
            p = 0.0
        elif lam >= 1.0:
            p = 1.0
        else:
            p = scipy_betainc(1.0 - lam, lam, 1.0 - lambda_m)
        out += p * np.outer(col, col)
    return out


def dense_inner(ma, mb):
    return float(np.sum(ma * mb))
