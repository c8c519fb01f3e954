"""Numeric kernels: chi-square family, root finding, small symmetric solves, keyed RNG.

Everything here works on plain floats / small numpy arrays. The heavier
simulation code builds on these and never touches scipy.stats directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import special


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class SingularMatrix(np.linalg.LinAlgError):
    """Symmetric system whose smallest pivot is numerically zero."""


# ---------------------------------------------------------------------------
# chi-square family
# ---------------------------------------------------------------------------

_NCX2_TAIL = 1e-12


def _check_dof(k) -> int:
    if k < 1 or int(k) != k:
        raise DomainError(f"degrees of freedom must be a positive integer, got {k!r}")
    return int(k)


def chi2_cdf(x: float, k: int) -> float:
    """P[chi2_k <= x] via the regularized lower incomplete gamma function."""
    k = _check_dof(k)
    if x < 0 or math.isnan(x):
        raise DomainError(f"x must be >= 0, got {x!r}")
    if x == 0:
        return 0.0
    return float(special.gammainc(0.5 * k, 0.5 * x))


def _chi2_logpdf(x: float, k: int) -> float:
    h = 0.5 * k
    return (h - 1.0) * math.log(x) - 0.5 * x - h * math.log(2.0) - math.lgamma(h)


def chi2_inv(prob: float, k: int) -> float:
    """Quantile of chi2_k.

    Brackets the root by doubling, bisects to a narrow interval, then polishes
    with safeguarded Newton steps on the cdf.
    """
    k = _check_dof(k)
    if not 0.0 < prob < 1.0:
        raise DomainError(f"prob must lie in (0, 1), got {prob!r}")

    lo, hi = 0.0, max(1.0, float(k))
    while chi2_cdf(hi, k) < prob:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, k) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-6 * hi:
            break

    x = 0.5 * (lo + hi)
    for _ in range(50):
        err = chi2_cdf(x, k) - prob
        if abs(err) <= 1e-14:
            break
        step = err / math.exp(_chi2_logpdf(x, k))
        x_new = x - step
        # stay inside the bracket; fall back to bisection otherwise
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if chi2_cdf(x_new, k) < prob:
            lo = x_new
        else:
            hi = x_new
        if abs(x_new - x) <= 1e-15 * x:
            x = x_new
            break
        x = x_new
    return x


def _poisson_weights(half_lambda: float) -> np.ndarray:
    """Poisson(half_lambda) pmf, truncated once the remaining tail mass < 1e-12."""
    if half_lambda == 0.0:
        return np.ones(1)
    jmax = int(half_lambda + 12.0 * math.sqrt(half_lambda) + 60)
    j = np.arange(jmax + 1, dtype=float)
    logw = -half_lambda + j * math.log(half_lambda) - special.gammaln(j + 1.0)
    w = np.exp(logw)
    # fsum-like accuracy is not needed here; cumulative mass only picks the cut
    tail = 1.0 - np.cumsum(w)
    beyond_mode = j >= half_lambda
    cut = np.flatnonzero(beyond_mode & (tail < _NCX2_TAIL))
    stop = int(cut[0]) + 1 if cut.size else w.size
    return w[:stop]


def noncentral_chi2_cdf(x: float, k: int, lam: float) -> float:
    """CDF of the non-central chi-square as a Poisson mixture of central ones."""
    k = _check_dof(k)
    if x < 0 or math.isnan(x):
        raise DomainError(f"x must be >= 0, got {x!r}")
    if lam < 0 or math.isnan(lam):
        raise DomainError(f"noncentrality must be >= 0, got {lam!r}")
    if lam == 0.0:
        return chi2_cdf(x, k)
    if x == 0:
        return 0.0
    w = _poisson_weights(0.5 * lam)
    dofs = k + 2.0 * np.arange(w.size)
    central = special.gammainc(0.5 * dofs, 0.5 * x)
    return float(min(1.0, math.fsum(w * central)))


def test_power(noncentrality: float, alpha0: float, p: int) -> float:
    """Rejection probability of the level-alpha0 chi2_p test under noncentrality c."""
    crit = chi2_inv(1.0 - alpha0, p)
    return 1.0 - noncentral_chi2_cdf(crit, p, noncentrality)


# keep pytest from collecting the helper above as a test
test_power.__test__ = False


def solve_c_beta(alpha0: float, beta0: float, p: int, tol: float = 1e-8) -> float:
    """Noncentrality at which the chi2_p test of level alpha0 has power 1 - beta0.

    The power curve is strictly increasing in the noncentrality, so plain
    bisection on ``power(c) - (1 - beta0)`` converges unconditionally.
    """
    if not 0.0 < alpha0 < 1.0:
        raise DomainError(f"alpha0 must lie in (0, 1), got {alpha0!r}")
    if not 0.0 < beta0 < 1.0:
        raise DomainError(f"beta0 must lie in (0, 1), got {beta0!r}")
    p = _check_dof(p)
    target = 1.0 - beta0
    crit = chi2_inv(1.0 - alpha0, p)

    def power(c):
        return 1.0 - noncentral_chi2_cdf(crit, p, c)

    if power(0.0) >= target - tol:
        return 0.0
    lo, hi = 0.0, 1.0
    while power(hi) < target:
        lo, hi = hi, 2.0 * hi
    while True:
        mid = 0.5 * (lo + hi)
        pm = power(mid)
        if abs(pm - target) <= tol or hi - lo <= 1e-14 * hi:
            return mid
        if pm < target:
            lo = mid
        else:
            hi = mid


# ---------------------------------------------------------------------------
# small symmetric systems
# ---------------------------------------------------------------------------

_SYM_TOL = 1e-10
_PIVOT_TOL = 1e-12


def _as_symmetric(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > _SYM_TOL * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def _factor(M: np.ndarray):
    """Cholesky if positive definite, otherwise pivoted LDL^T; both checked for singularity."""
    diag_scale = float(np.max(np.abs(np.diag(M)), initial=0.0))
    if diag_scale == 0.0:
        raise SingularMatrix("zero matrix")
    try:
        c, lower = scipy.linalg.cho_factor(M, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        pass
    else:
        if np.min(np.diag(c)) ** 2 < _PIVOT_TOL * diag_scale:
            raise SingularMatrix("smallest Cholesky pivot is numerically zero")
        return "chol", (c, lower)
    lu, d, perm = scipy.linalg.ldl(M, lower=True)
    pivots = np.linalg.eigvalsh(d)  # d is block diagonal with 1x1 / 2x2 blocks
    if np.min(np.abs(pivots)) < _PIVOT_TOL * diag_scale:
        raise SingularMatrix("smallest LDL pivot is numerically zero")
    return "ldl", (lu, d)


def sym_solve(M, v) -> np.ndarray:
    """Solve M x = v for symmetric M (v may be a vector or a matrix of columns)."""
    M = _as_symmetric(M)
    v = np.asarray(v, dtype=float)
    kind, fac = _factor(M)
    if kind == "chol":
        return scipy.linalg.cho_solve(fac, v)
    lu, d = fac
    # M = L D L^T with L = lu (a row-permuted triangular factor); solve directly
    y = np.linalg.solve(lu, v)
    z = np.linalg.solve(d, y)
    return np.linalg.solve(lu.T, z)


def sym_inverse(M) -> np.ndarray:
    """Inverse of a symmetric matrix, returned exactly symmetric."""
    M = _as_symmetric(M)
    inv = sym_solve(M, np.eye(M.shape[0]))
    return 0.5 * (inv + inv.T)


# ---------------------------------------------------------------------------
# random numbers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """Key of an independent random stream: (seed, replication, user, purpose).

    The key is hashed by ``numpy.random.SeedSequence`` and fed to a Philox
    counter-based generator, so streams for different keys never share state and
    can be created in any order or on any worker.
    """

    seed: int
    replication: int = 0
    user: int = 0
    purpose: int = 0

    def generator(self) -> np.random.Generator:
        entropy = [int(self.seed) & (2**64 - 1), int(self.replication), int(self.user), int(self.purpose)]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def uniform01(rng: np.random.Generator, size=None):
    return rng.random(size)


def normal(rng: np.random.Generator, mu: float = 0.0, sigma: float = 1.0, size=None):
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma!r}")
    return mu + sigma * rng.standard_normal(size)


def bernoulli(rng: np.random.Generator, p, size=None):
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)):
        raise DomainError("bernoulli probability outside [0, 1]")
    u = rng.random(size if size is not None else p_arr.shape or None)
    return (u < p_arr).astype(np.int64)


def sphere_point(rng: np.random.Generator, dim: int, radius: float, size=None) -> np.ndarray:
    """Uniform direction in R^dim scaled to the given norm.

    With ``size`` the result has shape ``(*size, dim)``.
    """
    if radius <= 0:
        raise DomainError(f"radius must be > 0, got {radius!r}")
    shape = (dim,) if size is None else tuple(np.atleast_1d(size)) + (dim,)
    g = rng.standard_normal(shape)
    return scale_to_sphere(g, radius)


def scale_to_sphere(g: np.ndarray, radius: float) -> np.ndarray:
    """Project standard-normal vectors (last axis) onto the sphere of given radius."""
    norm = np.sqrt(np.sum(g * g, axis=-1, keepdims=True))
    return radius * g / norm
