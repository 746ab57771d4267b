"""Closed-form Grassmann kernels and their coefficient functions.

Five kernel families operate on pairs of :class:`~dgrass.subspace.SubspaceRep`:

- ``projection``:        tr[(A A^T)(B B^T)], evaluated as ||A^T B||_F^2
- ``binet_cauchy``:      det(A^T B)^2
- ``scaled_projection``: tr(L_A A^T B L_B B^T A), L = diag(normalized singvals)
- ``dg_pg``:             expectation of the projection kernel when every basis
  vector is independently tilted by a random angle whose variance grows as the
  basis' singular value shrinks; the single parameter ``epsilon`` scales that
  variance. Each side contributes a diagonal weight plus an isotropic floor,
  so the expectation stays closed form.
- ``dg_dir``:            expectation when the normalized singular values are
  resampled from a Dirichlet distribution centered at themselves and then
  thresholded at ``lambda_m``. Equivalent to basis dropout with retention
  probabilities given by a regularized incomplete beta function.

All evaluations cost O(m^2 D) and never build a D x D matrix; the dense
feature-map route exists only as a test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .subspace import SubspaceRep

__all__ = [
    "KernelSpec",
    "GramMatrix",
    "DgCoefficients",
    "FAMILIES",
    "betainc",
    "disturbance_scale",
    "expected_cos2",
    "retention_prob",
    "dg_pg_coefficients",
    "projection_kernel",
    "binet_cauchy_kernel",
    "scaled_projection_kernel",
    "dg_pg_kernel",
    "dg_dir_kernel",
    "kernel_value",
    "gram",
    "cross_gram",
    "write_gram_csv",
]

FAMILIES = ("projection", "binet_cauchy", "scaled_projection", "dg_pg", "dg_dir")

_BETA_MAX_ITER = 300
_BETA_STOP = 1e-14
_BETA_TINY = 1e-300


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function, modified Lentz."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_TINY:
        d = _BETA_TINY
    d = 1.0 / d
    h = d
    for it in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * it
        # even step
        aa = it * (b - it) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + it) * (qab + it) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_STOP:
            return h
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Continued-fraction evaluation with the symmetry switch at
    x > (a+1)/(a+b+2); absolute accuracy better than 1e-12 on the unit
    interval. Non-convergence raises ArithmeticError rather than returning
    a silent partial value.
    """
    a = float(a)
    b = float(b)
    x = float(x)
    if not (a > 0.0 and b > 0.0):
        raise ValueError(f"beta parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        gammaln(a + b) - gammaln(a) - gammaln(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def disturbance_scale(singval, epsilon: float, ambient_dim: int):
    """Disturbance standard deviation assigned to a basis direction.

    sigma = sqrt(1 - exp(-(epsilon/D) (1/lambda - 1))): a direction carrying
    all the energy (lambda = 1) is left untouched, a negligible one is
    disturbed toward uniformity. Accepts scalars or arrays of singvals.
    """
    lam = np.asarray(singval, dtype=float)
    if np.any(lam <= 0.0) or np.any(lam > 1.0):
        raise ValueError("normalized singular values must lie in (0, 1]")
    epsilon = float(epsilon)
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if ambient_dim < 1:
        raise ValueError("ambient_dim must be positive")
    out = np.sqrt(-np.expm1(-(epsilon / ambient_dim) * (1.0 / lam - 1.0)))
    return out if out.ndim else float(out)


def expected_cos2(sigma, ambient_dim: int, m: int):
    """Expected squared cosine of the disturbance angle, 1/(sigma^2 (D-m) + 1).

    Equals 1 for sigma = 0 and decays to the uniform-over-the-sphere value
    1/(D-m+1) at sigma = 1.
    """
    sig = np.asarray(sigma, dtype=float)
    if np.any(sig < 0.0) or np.any(sig > 1.0):
        raise ValueError("sigma must lie in [0, 1]")
    if not 0 < m < ambient_dim:
        raise ValueError(f"need 0 < m < D, got m={m}, D={ambient_dim}")
    out = 1.0 / (sig * sig * (ambient_dim - m) + 1.0)
    return out if out.ndim else float(out)


def retention_prob(singval, lambda_m: float):
    """Probability that a basis direction survives threshold truncation.

    Under Dirichlet fluctuation of the normalized singular values, component
    l has marginal Beta(lambda_l, 1 - lambda_l); the survival probability at
    threshold lambda_m is I_{1-lambda_m}(1 - lambda_l, lambda_l). Singular
    values numerically at 0 or 1 degenerate the beta law and are clamped to
    probabilities 0 and 1.
    """
    lambda_m = float(lambda_m)
    if not 0.0 <= lambda_m < 1.0:
        raise ValueError(f"lambda_m must lie in [0, 1), got {lambda_m}")
    lam = np.asarray(singval, dtype=float)
    if np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError("normalized singular values must lie in [0, 1]")
    flat = np.atleast_1d(lam).ravel()
    probs = np.empty(flat.shape)
    for i, v in enumerate(flat):
        if v <= 0.0:
            probs[i] = 0.0
        elif v >= 1.0:
            probs[i] = 1.0
        else:
            probs[i] = betainc(1.0 - v, v, 1.0 - lambda_m)
    out = probs.reshape(np.atleast_1d(lam).shape)
    return float(out[0]) if lam.ndim == 0 else out


@dataclass(frozen=True)
class DgCoefficients:
    """Per-basis weights and the isotropic floor of the dg_pg feature map."""

    diag: np.ndarray
    delta: float


def dg_pg_coefficients(rep: SubspaceRep, epsilon: float) -> DgCoefficients:
    """Diagonal weights c(sigma_lambda) and floor Delta = (m - tr)/(D - m)."""
    d, m = rep.ambient_dim, rep.m
    if m >= d:
        raise ValueError("dg_pg requires m < D: the disturbance lives in the null space")
    sig = disturbance_scale(rep.singvals, epsilon, d)
    diag = np.atleast_1d(expected_cos2(sig, d, m))
    delta = float((m - diag.sum()) / (d - m))
    return DgCoefficients(diag=diag, delta=delta)


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its parameter.

    ``epsilon`` is meaningful only for dg_pg (>= 0), ``lambda_m`` only for
    dg_dir (in [0, 1)); supplying either for another family is an error so
    that misconfigured grids fail loudly. ``symmetrize`` controls whether
    Gram assembly applies the (K + K^T)/2 cleanup.
    """

    family: str
    epsilon: float | None = None
    lambda_m: float | None = None
    symmetrize: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}, expected one of {FAMILIES}")
        if self.family == "dg_pg":
            if self.epsilon is None or float(self.epsilon) < 0.0:
                raise ValueError("dg_pg requires epsilon >= 0")
        elif self.epsilon is not None:
            raise ValueError(f"epsilon is not a parameter of {self.family}")
        if self.family == "dg_dir":
            if self.lambda_m is None or not 0.0 <= float(self.lambda_m) < 1.0:
                raise ValueError("dg_dir requires lambda_m in [0, 1)")
        elif self.lambda_m is not None:
            raise ValueError(f"lambda_m is not a parameter of {self.family}")

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.epsilon is not None:
            out["epsilon"] = float(self.epsilon)
        if self.lambda_m is not None:
            out["lambda_m"] = float(self.lambda_m)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(
            family=d["family"],
            epsilon=d.get("epsilon"),
            lambda_m=d.get("lambda_m"),
        )


def _check_pair(a: SubspaceRep, b: SubspaceRep) -> None:
    if a.ambient_dim != b.ambient_dim:
        raise ValueError(
            f"ambient dimensions differ: {a.ambient_dim} vs {b.ambient_dim}"
        )


def projection_kernel(a: SubspaceRep, b: SubspaceRep) -> float:
    """tr[(A A^T)(B B^T)] = ||A^T B||_F^2, in O(m^2 D)."""
    _check_pair(a, b)
    t = a.basis.T @ b.basis
    return float(np.sum(t * t))


def binet_cauchy_kernel(a: SubspaceRep, b: SubspaceRep) -> float:
    """det(A^T B)^2; requires equal subspace dimensions."""
    _check_pair(a, b)
    if a.m != b.m:
        raise ValueError(f"binet_cauchy needs equal ranks, got {a.m} and {b.m}")
    det = np.linalg.det(a.basis.T @ b.basis)
    return float(det * det)


def scaled_projection_kernel(a: SubspaceRep, b: SubspaceRep) -> float:
    """Projection kernel with each basis weighted by its singular value."""
    _check_pair(a, b)
    t = a.basis.T @ b.basis
    return float(a.singvals @ (t * t) @ b.singvals)


def dg_pg_kernel(a: SubspaceRep, b: SubspaceRep, epsilon: float) -> float:
    """Expected projection kernel under the pseudo-Gaussian basis disturbance.

    Closed form: each side's feature map is U (S - Delta I) U^T + Delta I
    with S = diag(c(sigma_lambda)); the Frobenius inner product expands to
    the weighted alignment plus an affine tail, still O(m^2 D). The tail's
    residual uses each side's own rank: Delta_A Delta_B (D - m_A - m_B),
    which reduces to the equal-rank form when m_A = m_B.
    """
    _check_pair(a, b)
    ca = dg_pg_coefficients(a, epsilon)
    cb = dg_pg_coefficients(b, epsilon)
    t = a.basis.T @ b.basis
    wa = ca.diag - ca.delta
    wb = cb.diag - cb.delta
    aligned = float(wa @ (t * t) @ wb)
    tail = (
        ca.delta * float(cb.diag.sum())
        + cb.delta * float(ca.diag.sum())
        + ca.delta * cb.delta * (a.ambient_dim - a.m - b.m)
    )
    return aligned + tail


def dg_dir_kernel(a: SubspaceRep, b: SubspaceRep, lambda_m: float) -> float:
    """Expected projection kernel under Dirichlet dropout of basis directions."""
    _check_pair(a, b)
    pa = np.atleast_1d(retention_prob(a.singvals, lambda_m))
    pb = np.atleast_1d(retention_prob(b.singvals, lambda_m))
    t = a.basis.T @ b.basis
    return float(pa @ (t * t) @ pb)


def kernel_value(a: SubspaceRep, b: SubspaceRep, spec: KernelSpec) -> float:
    """Evaluate one kernel entry according to spec."""
    if spec.family == "projection":
        return projection_kernel(a, b)
    if spec.family == "binet_cauchy":
        return binet_cauchy_kernel(a, b)
    if spec.family == "scaled_projection":
        return scaled_projection_kernel(a, b)
    if spec.family == "dg_pg":
        return dg_pg_kernel(a, b, spec.epsilon)
    return dg_dir_kernel(a, b, spec.lambda_m)


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric kernel matrix over a set of subspaces plus instance ids."""

    values: np.ndarray
    ids: tuple[str, ...]


@dataclass(frozen=True)
class _SideWeights:
    # Cached per-instance coefficients: every family except binet_cauchy is
    # a weighted alignment sum; dg_pg adds a tail built from delta and csum.
    w: np.ndarray
    delta: float
    csum: float


def _side_weights(rep: SubspaceRep, spec: KernelSpec) -> _SideWeights | None:
    if spec.family == "projection":
        return _SideWeights(np.ones(rep.m), 0.0, 0.0)
    if spec.family == "scaled_projection":
        return _SideWeights(np.asarray(rep.singvals, dtype=float), 0.0, 0.0)
    if spec.family == "dg_dir":
        return _SideWeights(np.atleast_1d(retention_prob(rep.singvals, spec.lambda_m)), 0.0, 0.0)
    if spec.family == "dg_pg":
        c = dg_pg_coefficients(rep, spec.epsilon)
        return _SideWeights(c.diag - c.delta, c.delta, float(c.diag.sum()))
    return None  # binet_cauchy has no weight form


def _entry(a: SubspaceRep, b: SubspaceRep, spec: KernelSpec,
           wa: _SideWeights | None, wb: _SideWeights | None) -> float:
    if wa is None or wb is None:
        return binet_cauchy_kernel(a, b)
    t = a.basis.T @ b.basis
    val = float(wa.w @ (t * t) @ wb.w)
    if spec.family == "dg_pg":
        val += (
            wa.delta * wb.csum
            + wb.delta * wa.csum
            + wa.delta * wb.delta * (a.ambient_dim - a.m - b.m)
        )
    return val


def gram(reps: list[SubspaceRep], spec: KernelSpec, ids: tuple[str, ...] | None = None) -> GramMatrix:
    """Kernel matrix over a list of subspaces.

    Per-instance coefficients are computed once; entries are evaluated on
    the upper triangle and mirrored, then (K + K^T)/2 is applied when
    spec.symmetrize (a no-op here, kept to absorb any caller-side edits).
    """
    if len(reps) == 0:
        raise ValueError("gram of an empty set")
    d0 = reps[0].ambient_dim
    for rep in reps:
        if rep.ambient_dim != d0:
            raise ValueError("gram requires a uniform ambient dimension")
    if ids is None:
        ids = tuple(str(i) for i in range(len(reps)))
    if len(ids) != len(reps):
        raise ValueError("ids length does not match the instance count")
    sides = [_side_weights(rep, spec) for rep in reps]
    n = len(reps)
    values = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            v = _entry(reps[i], reps[j], spec, sides[i], sides[j])
            values[i, j] = v
            values[j, i] = v
    if spec.symmetrize:
        values = 0.5 * (values + values.T)
    return GramMatrix(values=values, ids=ids)


def cross_gram(rows: list[SubspaceRep], cols: list[SubspaceRep], spec: KernelSpec) -> np.ndarray:
    """Rectangular kernel block K[i, j] = kappa(rows[i], cols[j])."""
    if len(rows) == 0 or len(cols) == 0:
        raise ValueError("cross_gram of an empty set")
    side_r = [_side_weights(rep, spec) for rep in rows]
    side_c = [_side_weights(rep, spec) for rep in cols]
    out = np.empty((len(rows), len(cols)))
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            out[i, j] = _entry(a, b, spec, side_r[i], side_c[j])
    return out


def write_gram_csv(gm: GramMatrix, path) -> None:
    """Row-major full symmetric CSV export, one matrix row per line."""
    np.savetxt(path, gm.values, delimiter=",", fmt="%.17g")
