"""Clip-range solver: the smallest exploration that still reaches the target power.

For a fixed randomization probability pi the noncentrality of the treatment
effect test is

    c_N = N * pi * (1 - pi) / sigma2 * delta' E[sum_t Z Z'] delta,

so requiring c_N = c_beta gives the quadratic pi (1 - pi) = Delta with

    Delta = sigma2 * c_beta / (N * delta' E[sum_t Z Z'] delta).

Its two roots are the clip range; any propensity inside it only raises c_N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numstats import solve_c_beta, test_power
from .wrappers import ClipRange


class Infeasible(ValueError):
    """No probability reaches the requested power for this design (Delta > 1/4)."""


@dataclass
class PowerSpec:
    alpha0: float
    beta0: float
    N: int
    T: int
    sigma2: float
    delta_est: np.ndarray
    ezz: np.ndarray
    p: int | None = None

    def __post_init__(self):
        self.delta_est = np.asarray(self.delta_est, dtype=float)
        self.ezz = np.asarray(self.ezz, dtype=float)
        if self.p is None:
            self.p = self.delta_est.size
        if self.delta_est.shape != (self.p,) or self.ezz.shape != (self.p, self.p):
            raise ValueError("delta_est / ezz dimensions do not match p")
        if np.max(np.abs(self.ezz - self.ezz.T)) > 1e-10 * max(1.0, np.max(np.abs(self.ezz))):
            raise ValueError("ezz must be symmetric")
        if self.sigma2 <= 0 or self.N < 1 or self.T < 1:
            raise ValueError("need sigma2 > 0, N >= 1, T >= 1")

    @property
    def signal(self) -> float:
        """delta' E[sum Z Z'] delta."""
        return float(self.delta_est @ self.ezz @ self.delta_est)


@dataclass(frozen=True)
class SolvedRange:
    clip_range: ClipRange
    c_beta: float
    spec: PowerSpec = field(repr=False)


def discriminant(spec: PowerSpec, c_beta: float | None = None) -> float:
    if c_beta is None:
        c_beta = solve_c_beta(spec.alpha0, spec.beta0, spec.p)
    signal = spec.signal
    if not signal > 0:
        raise ValueError("delta' ezz delta must be positive to solve for a clip range")
    return spec.sigma2 * c_beta / (spec.N * signal)


def solve(spec: PowerSpec) -> SolvedRange:
    """Clip range plus the noncentrality threshold it was derived from."""
    c_beta = solve_c_beta(spec.alpha0, spec.beta0, spec.p)
    delta = discriminant(spec, c_beta)
    if delta > 0.25:
        raise Infeasible(
            f"Delta = {delta:.4f} > 0.25: N*T too small for power {1 - spec.beta0:.2f} "
            "at this effect size and noise level"
        )
    root = math.sqrt(1.0 - 4.0 * delta)
    pi_min = 0.5 * (1.0 - root)
    # pi_max = 1 - pi_min keeps the pair exactly symmetric
    return SolvedRange(ClipRange(pi_min, 1.0 - pi_min, delta), c_beta, spec)


def solve_clip_range(spec: PowerSpec) -> ClipRange:
    return solve(spec).clip_range


def noncentrality_at(pi: float, spec: PowerSpec) -> float:
    return spec.N * pi * (1.0 - pi) / spec.sigma2 * spec.signal


def power_at(pi: float, spec: PowerSpec) -> float:
    """Asymptotic power when every propensity equals pi."""
    if not 0.0 < pi < 1.0:
        raise ValueError(f"pi must lie in (0, 1), got {pi!r}")
    return test_power(noncentrality_at(pi, spec), spec.alpha0, spec.p)
