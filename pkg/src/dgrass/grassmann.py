"""Grassmann manifold geometry and disturbance samplers.

The samplers here exist to validate the closed-form kernel expectations by
Monte Carlo: a disturbed basis is drawn as u~ = u cos(theta) + w sin(theta)
with w uniform on the sphere of the null space, and Dirichlet fluctuation
resamples the normalized singular values before threshold truncation. The
geometry half (exponential map, principal angles) supplies the ground truth
the samplers are checked against.

All sampling takes an explicit numpy Generator; nothing here owns hidden
random state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .kernels import expected_cos2, disturbance_scale
from .subspace import SubspaceRep, check_sequence, null_complement

__all__ = [
    "TangentVector",
    "FixedTheta",
    "FoldedTheta",
    "PseudoGaussian",
    "DirichletFluctuation",
    "DisturbanceSpec",
    "McEstimate",
    "exp_map",
    "principal_angles",
    "sample_basis_disturbance",
    "sample_dirichlet",
    "mc_projection_moment",
    "svd_perturbation_check",
]

_HORIZONTAL_TOL = 1e-8


@dataclass(frozen=True)
class TangentVector:
    """Horizontal tangent H at a base subspace: basis^T H = 0."""

    matrix: np.ndarray
    base: SubspaceRep


@dataclass(frozen=True)
class FixedTheta:
    """Deterministic disturbance angle."""

    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi / 2:
            raise ValueError(f"theta must lie in [0, pi/2], got {self.theta}")


@dataclass(frozen=True)
class FoldedTheta:
    """Half-normal angle |scale * N(0,1)|, rejected to [0, pi/2]."""

    scale: float

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")


ThetaLaw = Union[FixedTheta, FoldedTheta]


@dataclass(frozen=True)
class PseudoGaussian:
    """Per-basis angular disturbance with singular-value-dependent variance.

    ``theta_law=None`` selects the calibrated default: a fixed angle with
    cos^2(theta) = expected_cos2(sigma), the cheapest law realizing the
    designed coefficient exactly. Only E[cos^2 theta] enters the kernels,
    so any law matching it validates the same closed form.
    """

    epsilon: float
    theta_law: ThetaLaw | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class DirichletFluctuation:
    """Dirichlet resampling of the singvals, thresholded at lambda_m."""

    lambda_m: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lambda_m < 1.0:
            raise ValueError("lambda_m must lie in [0, 1)")


DisturbanceSpec = Union[PseudoGaussian, DirichletFluctuation]


@dataclass(frozen=True)
class McEstimate:
    """Monte-Carlo estimate of E[U~ U~^T] with its worst per-entry stderr."""

    mean_matrix: np.ndarray
    samples: int
    stderr: float


def exp_map(base: SubspaceRep, tangent: TangentVector) -> SubspaceRep:
    """Geodesic endpoint of a horizontal tangent step.

    With the compact SVD H = Uh S Vh^T the endpoint basis is
    (U Vh) cos(S) Vh^T + Uh sin(S) Vh^T. Singular-value metadata is copied
    from the base: geometry does not alter the spectrum.
    """
    u = base.basis
    h = np.asarray(tangent.matrix, dtype=float)
    if h.shape != u.shape:
        raise ValueError(f"tangent shape {h.shape} does not match basis shape {u.shape}")
    if np.linalg.norm(u.T @ h) > _HORIZONTAL_TOL:
        raise ValueError("tangent is not horizontal: basis^T H exceeds tolerance")
    uh, s, vt = np.linalg.svd(h, full_matrices=False)
    v = vt.T
    new_basis = ((u @ v) * np.cos(s)) @ vt + (uh * np.sin(s)) @ vt
    return SubspaceRep(basis=new_basis, singvals=np.array(base.singvals, copy=True))


def principal_angles(a: SubspaceRep, b: SubspaceRep) -> np.ndarray:
    """Canonical angles between two equal-rank subspaces, ascending in [0, pi/2]."""
    if a.ambient_dim != b.ambient_dim:
        raise ValueError("ambient dimensions differ")
    if a.m != b.m:
        raise ValueError(f"principal angles need equal ranks, got {a.m} and {b.m}")
    s = np.linalg.svd(a.basis.T @ b.basis, compute_uv=False)
    return np.arccos(np.clip(s, 0.0, 1.0))


def _draw_theta(law: ThetaLaw | None, sigma: float, d: int, m: int,
                rng: np.random.Generator, size: int) -> np.ndarray:
    if law is None:
        theta = float(np.arccos(np.sqrt(expected_cos2(sigma, d, m))))
        return np.full(size, theta)
    if isinstance(law, FixedTheta):
        return np.full(size, law.theta)
    out = np.empty(size)
    need = np.ones(size, dtype=bool)
    # rejection to [0, pi/2]; acceptance is >2/3 even at scale = pi/2
    for _ in range(1000):
        k = int(need.sum())
        if k == 0:
            return out
        draw = np.abs(law.scale * rng.standard_normal(k))
        out[need] = draw
        need[need] = draw > np.pi / 2
    raise ArithmeticError("folded-angle rejection sampling failed to terminate")


def _unit_sphere(rng: np.random.Generator, size: int, dim: int) -> np.ndarray:
    x = rng.standard_normal((size, dim))
    norms = np.linalg.norm(x, axis=1)
    # resample the measure-zero degenerate rows rather than dividing by ~0
    for _ in range(100):
        bad = norms < 1e-12
        if not bad.any():
            break
        x[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms[bad] = np.linalg.norm(x[bad], axis=1)
    return x / norms[:, None]


def sample_basis_disturbance(u: np.ndarray, nullb: np.ndarray, sigma: float,
                             theta_law: ThetaLaw | None,
                             rng: np.random.Generator) -> np.ndarray:
    """One disturbed basis vector u~ = u cos(theta) + w sin(theta).

    w = nullb @ x with x uniform on the unit sphere of the null space, and
    theta comes from theta_law (None: the calibrated fixed angle realizing
    E[cos^2 theta] = expected_cos2(sigma)). The output has unit norm.
    """
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-6:
        raise ValueError("u must be a unit vector")
    if not 0.0 <= sigma <= 1.0:
        raise ValueError(f"sigma must lie in [0, 1], got {sigma}")
    d, d_minus_m = nullb.shape
    if u.shape != (d,):
        raise ValueError("u and nullb have inconsistent ambient dimensions")
    theta = _draw_theta(theta_law, sigma, d, d - d_minus_m, rng, 1)[0]
    if theta == 0.0:
        return u.copy()
    x = _unit_sphere(rng, 1, d_minus_m)[0]
    return u * np.cos(theta) + (nullb @ x) * np.sin(theta)


def sample_dirichlet(lambdas: np.ndarray, rng: np.random.Generator,
                     size: int | None = None) -> np.ndarray:
    """Dirichlet draw(s) with concentration equal to the simplex vector itself.

    Uses the standard Gamma(lambda_l, 1) normalization. Shapes well below 1
    can underflow every component to zero; such rows are redrawn (bounded),
    which conditions on the representable event and is exact otherwise.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise ValueError("lambdas must be a 1d simplex vector")
    if np.any(lam <= 0.0):
        raise ValueError("Dirichlet concentrations must be positive")
    if abs(lam.sum() - 1.0) > 1e-8:
        raise ValueError(f"lambdas must sum to 1, got {lam.sum()!r}")
    n = 1 if size is None else int(size)
    if lam.size == 1:
        out = np.ones((n, 1))
        return out[0] if size is None else out
    g = rng.gamma(lam, size=(n, lam.size))
    totals = g.sum(axis=1)
    for _ in range(100):
        bad = totals <= 0.0
        if not bad.any():
            break
        g[bad] = rng.gamma(lam, size=(int(bad.sum()), lam.size))
        totals[bad] = g[bad].sum(axis=1)
    else:
        raise ArithmeticError("Dirichlet sampling kept underflowing to zero")
    out = g / totals[:, None]
    return out[0] if size is None else out


def _accumulate_pg(rep: SubspaceRep, spec: PseudoGaussian, n_samples: int,
                   rng: np.random.Generator, columns: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Sum and entrywise square-sum of S_k = sum_l u~_l u~_l^T over draws."""
    d = rep.ambient_dim
    nullb = null_complement(rep)
    total = np.zeros((d, d))
    total_sq = np.zeros((d, d))
    chunk = max(1, min(n_samples, 200_000 // (d * d) + 1))
    sigmas = {
        l: float(disturbance_scale(float(rep.singvals[l]), spec.epsilon, d))
        for l in columns
    }
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        s_chunk = np.zeros((k, d, d))
        for l in columns:
            theta = _draw_theta(spec.theta_law, sigmas[l], d, rep.m, rng, k)
            w = _unit_sphere(rng, k, d - rep.m) @ nullb.T
            cols = np.cos(theta)[:, None] * rep.basis[:, l] + np.sin(theta)[:, None] * w
            s_chunk += cols[:, :, None] * cols[:, None, :]
        total += s_chunk.sum(axis=0)
        total_sq += (s_chunk * s_chunk).sum(axis=0)
        done += k
    return total, total_sq


def _accumulate_dirichlet(rep: SubspaceRep, spec: DirichletFluctuation, n_samples: int,
                          rng: np.random.Generator, columns: list[int]) -> tuple[np.ndarray, np.ndarray]:
    u = rep.basis[:, columns]
    lam = np.asarray(rep.singvals, dtype=float)
    draws = sample_dirichlet(lam, rng, size=n_samples)
    keep = (draws[:, columns] > spec.lambda_m).astype(float)
    total = (u * keep.sum(axis=0)) @ u.T
    # entrywise: sum_k (sum_l b_kl P^l)^2 = sum_{l,s} (B^T B)_{ls} P^l o P^s
    counts = keep.T @ keep
    t = np.einsum("il,jl->lij", u, u)
    total_sq = np.einsum("ls,lij,sij->ij", counts, t, t)
    return total, total_sq


def mc_projection_moment(rep: SubspaceRep, spec: DisturbanceSpec, n_samples: int,
                         rng: np.random.Generator,
                         columns: list[int] | None = None) -> McEstimate:
    """Monte-Carlo estimate of E[U~ U~^T] under a disturbance law.

    ``columns`` restricts the estimate to a subset of basis directions
    (default: all of them); with a single column this is the per-basis
    second moment E[u~ u~^T] that the closed-form coefficients predict.
    The stderr reported is the worst per-entry standard error.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    cols = list(range(rep.m)) if columns is None else [int(c) for c in columns]
    if any(not 0 <= c < rep.m for c in cols) or len(set(cols)) != len(cols):
        raise ValueError(f"columns must be distinct indices below m={rep.m}")
    if isinstance(spec, PseudoGaussian):
        total, total_sq = _accumulate_pg(rep, spec, n_samples, rng, cols)
    elif isinstance(spec, DirichletFluctuation):
        total, total_sq = _accumulate_dirichlet(rep, spec, n_samples, rng, cols)
    else:
        raise TypeError(f"unknown disturbance spec {type(spec).__name__}")
    mean = total / n_samples
    if n_samples > 1:
        var = (total_sq - n_samples * mean * mean) / (n_samples - 1)
        stderr = float(np.sqrt(np.maximum(var, 0.0).max() / n_samples))
    else:
        stderr = float("inf")
    return McEstimate(mean_matrix=mean, samples=n_samples, stderr=stderr)


def svd_perturbation_check(seq: np.ndarray, m: int, eps_x: float, trials: int,
                           rng: np.random.Generator) -> dict:
    """First-order accuracy report for the top-m singular subspace under noise.

    For each trial, the data matrix X is perturbed to X + eps*W with
    W_ij ~ N(0, 1/D). The linearized subspace U + eps * Uperp Uperp^T W V S^-1
    is compared against the recomputed top-m subspace of the perturbed
    matrix, after Procrustes alignment; errors are reported at eps and
    eps/2. A first-order-exact prediction leaves an o(eps) residual, so the
    half-step error should shrink faster than linearly.
    """
    x = check_sequence(seq)
    d, n = x.shape
    if not 1 <= m <= min(d, n):
        raise ValueError(f"m must lie in 1..min(D, N), got {m}")
    eps_x = float(eps_x)
    if eps_x < 0.0:
        raise ValueError("eps_x must be >= 0")
    if eps_x > d ** -0.5:
        raise ValueError(f"eps_x={eps_x} exceeds the small-noise regime bound D^-0.5")
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    u_full, s, vt = np.linalg.svd(x, full_matrices=True)
    if s[m - 1] <= 1e-12 * s[0]:
        raise ValueError("matrix rank is below m")
    gaps = np.abs(np.diff(s[: min(m + 1, len(s))]))
    if gaps.size and gaps.min() < 1e-6:
        raise ValueError("perturbation theory inapplicable: repeated singular values")
    u = u_full[:, :m]
    uperp = u_full[:, m:]
    v = vt[:m].T
    sig = s[:m]

    def _aligned_error(pred: np.ndarray, true: np.ndarray) -> float:
        pq, _ = np.linalg.qr(pred)
        uu, _, vv = np.linalg.svd(pq.T @ true)
        return float(np.linalg.norm(pq @ (uu @ vv) - true))

    errs = np.zeros(2)
    for _ in range(trials):
        w = rng.standard_normal((d, n)) / np.sqrt(d)
        w0 = uperp.T @ w @ v
        for k, eps in enumerate((eps_x, eps_x / 2.0)):
            true = np.linalg.svd(x + eps * w, full_matrices=False)[0][:, :m]
            pred = u + eps * (uperp @ (w0 / sig))
            errs[k] += _aligned_error(pred, true)
    errs /= trials
    return {
        "mean_error_at_eps": float(errs[0]),
        "mean_error_at_half_eps": float(errs[1]),
        "eps_x": eps_x,
        "trials": trials,
    }
