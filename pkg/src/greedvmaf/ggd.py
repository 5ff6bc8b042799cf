"""Generalized Gaussian distribution fitting and entropy.

The density is f(x; alpha, beta) = beta / (2 alpha Gamma(1/beta))
* exp(-(|x|/alpha)^beta).  Shape beta is estimated by matching the sample
kurtosis against the closed-form GGD kurtosis (monotone in beta), the scale
alpha then follows from the variance.  Differential entropy has the closed
form 1/beta - log(beta / (2 alpha Gamma(1/beta))).

All gamma-function evaluations go through log-gamma so that small beta does
not overflow.  The array helpers (`kurtosis_of_beta`, `solve_beta`,
`entropy_from_moments`) broadcast over numpy arrays; they carry the per-patch
workloads of the feature extractors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "BETA_MIN",
    "BETA_MAX",
    "DegenerateSignalError",
    "GGDParams",
    "ggd_entropy",
    "ggd_kurtosis",
    "kurtosis_of_beta",
    "solve_beta",
    "alpha_from_variance",
    "entropy_from_moments",
    "fit_ggd_from_moments",
    "fit_ggd_kurtosis_match",
    "apply_neural_noise",
    "propagate_noise_moments",
]

# Shape search interval; kurtosis outside the representable range clamps to
# the nearest endpoint instead of failing on pathological patches.
BETA_MIN = 0.1
BETA_MAX = 10.0
_BISECT_ITERS = 200
_RESIDUAL_TOL = 1e-12


class DegenerateSignalError(ValueError):
    """Raised when the input has no variance to fit a distribution to."""


@dataclass(frozen=True)
class GGDParams:
    """Scale/shape pair; variance and kurtosis are derived quantities."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (BETA_MIN <= self.beta <= BETA_MAX):
            raise ValueError(
                f"beta must lie in [{BETA_MIN}, {BETA_MAX}], got {self.beta}"
            )

    @property
    def variance(self) -> float:
        b = self.beta
        return self.alpha**2 * math.exp(math.lgamma(3.0 / b) - math.lgamma(1.0 / b))

    @property
    def kurtosis(self) -> float:
        return float(kurtosis_of_beta(self.beta))


def kurtosis_of_beta(beta):
    """Gamma(1/b) Gamma(5/b) / Gamma(3/b)^2; strictly decreasing in b."""
    b = np.asarray(beta, dtype=np.float64)
    return np.exp(gammaln(1.0 / b) + gammaln(5.0 / b) - 2.0 * gammaln(3.0 / b))


def ggd_kurtosis(beta: float) -> float:
    return float(kurtosis_of_beta(beta))


def ggd_entropy(params: GGDParams) -> float:
    """Differential entropy in nats."""
    a, b = params.alpha, params.beta
    return 1.0 / b - math.log(b) + math.log(2.0 * a) + math.lgamma(1.0 / b)


def solve_beta(kurtosis):
    """Invert the kurtosis curve by bisection, vectorised over arrays.

    Values outside [kurtosis(BETA_MAX), kurtosis(BETA_MIN)] clamp to the
    interval endpoints.
    """
    kurt = np.asarray(kurtosis, dtype=np.float64)
    scalar = kurt.ndim == 0
    kurt = np.atleast_1d(kurt)
    lo = np.full(kurt.shape, BETA_MIN)
    hi = np.full(kurt.shape, BETA_MAX)
    k_lo = kurtosis_of_beta(BETA_MIN)
    k_hi = kurtosis_of_beta(BETA_MAX)
    clamp_lo = kurt >= k_lo
    clamp_hi = kurt <= k_hi
    active = ~(clamp_lo | clamp_hi)
    for _ in range(_BISECT_ITERS):
        if not np.any(active):
            break
        mid = 0.5 * (lo + hi)
        k_mid = kurtosis_of_beta(mid)
        # kurtosis decreases with beta: solution right of mid where k_mid > target
        go_right = active & (k_mid > kurt)
        go_left = active & ~go_right
        lo[go_right] = mid[go_right]
        hi[go_left] = mid[go_left]
        active = active & (np.abs(k_mid - kurt) > _RESIDUAL_TOL)
    beta = 0.5 * (lo + hi)
    beta[clamp_lo] = BETA_MIN
    beta[clamp_hi] = BETA_MAX
    return float(beta[0]) if scalar else beta


def alpha_from_variance(variance, beta):
    """alpha = sqrt(variance * Gamma(1/b) / Gamma(3/b))."""
    b = np.asarray(beta, dtype=np.float64)
    v = np.asarray(variance, dtype=np.float64)
    return np.sqrt(v * np.exp(gammaln(1.0 / b) - gammaln(3.0 / b)))


def entropy_from_moments(variance, kurtosis):
    """Vectorised GGD entropy of distributions with the given moments."""
    beta = solve_beta(kurtosis)
    alpha = alpha_from_variance(variance, beta)
    b = np.asarray(beta, dtype=np.float64)
    return 1.0 / b - np.log(b) + np.log(2.0 * alpha) + gammaln(1.0 / b)


def fit_ggd_from_moments(variance: float, kurtosis: float) -> GGDParams:
    """Kurtosis-matching fit from precomputed (population) moments."""
    if not variance > 0:
        raise DegenerateSignalError(f"variance must be positive, got {variance}")
    beta = solve_beta(kurtosis)
    alpha = float(alpha_from_variance(variance, beta))
    return GGDParams(alpha=alpha, beta=beta)


def fit_ggd_kurtosis_match(samples) -> GGDParams:
    """Fit (alpha, beta) to a sample vector by kurtosis matching."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 4:
        raise ValueError(f"need at least 4 samples, got {x.size}")
    centred = x - x.mean()
    m2 = float(np.mean(centred**2))
    if m2 <= 0.0:
        raise DegenerateSignalError("samples have zero variance")
    m4 = float(np.mean(centred**4))
    return fit_ggd_from_moments(m2, m4 / (m2 * m2))


def propagate_noise_moments(variance, kurtosis, sigma_n2: float):
    """Moments of X + N(0, sigma_n2) with X independent of the noise.

    Exact for the second and fourth moments:
      var' = var + sigma_n2
      m4'  = kurt*var^2 + 6 var sigma_n2 + 3 sigma_n2^2
    """
    v = np.asarray(variance, dtype=np.float64)
    k = np.asarray(kurtosis, dtype=np.float64)
    v_out = v + sigma_n2
    m4 = k * v * v + 6.0 * v * sigma_n2 + 3.0 * sigma_n2 * sigma_n2
    return v_out, m4 / (v_out * v_out)


def apply_neural_noise(params: GGDParams, sigma_n2: float) -> GGDParams:
    """Refit the GGD after an additive Gaussian perceptual-noise channel.

    The channel is realised by deterministic moment propagation, so repeated
    calls are reproducible and sigma_n2 = 0 is the identity.
    """
    if sigma_n2 < 0:
        raise ValueError(f"noise variance must be >= 0, got {sigma_n2}")
    v, k = propagate_noise_moments(params.variance, params.kurtosis, sigma_n2)
    return fit_ggd_from_moments(float(v), float(k))
