"""Privacy accounting primitives shared by the mechanism-specific bounds.

Gaussian-mechanism RDP and privacy profile, the half-normal moment generating
function, RDP curves, and conversion from RDP to (epsilon, delta)-DP.
"""

import dataclasses
import math

import numpy as np
from scipy import special

from objpert.config import DEFAULTS
from objpert.errors import DomainError

_SQRT2 = math.sqrt(2.0)


def std_normal_cdf(x):
    """Standard normal CDF through erfc, accurate to ~1e-16 absolute."""
    return (0.5 * special.erfc(-np.asarray(x, dtype=float) / _SQRT2))[()]


def _log_std_normal_cdf(x):
    return special.log_ndtr(x)


def gaussian_rdp(delta_f, sigma, alpha):
    """RDP of the Gaussian mechanism: delta_f^2 * alpha / (2 sigma^2)."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    alpha = np.asarray(alpha, dtype=float)
    return (delta_f**2 * alpha / (2.0 * sigma**2))[()]


def gaussian_hs_delta(delta_f, sigma, epsilon):
    """Tight delta(epsilon) of the Gaussian mechanism with sensitivity delta_f.

    Evaluates Phi(-eps*sigma/D + D/(2 sigma)) - e^eps Phi(-eps*sigma/D - D/(2 sigma)),
    the second product in log space so large epsilon does not overflow.
    Negative epsilon is allowed. The result is clamped to [0, 1].
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    eps = np.asarray(epsilon, dtype=float)
    delta_f = abs(float(delta_f))
    if delta_f == 0.0:
        return np.clip(-np.expm1(eps), 0.0, 1.0)[()]
    a = -eps * sigma / delta_f + delta_f / (2.0 * sigma)
    b = -eps * sigma / delta_f - delta_f / (2.0 * sigma)
    out = std_normal_cdf(a) - np.exp(eps + _log_std_normal_cdf(b))
    return np.clip(out, 0.0, 1.0)[()]


def log_halfnormal_mgf(scale, t):
    """log E[exp(t |X|)] for X ~ N(0, scale^2), t >= 0.

    Closed form log 2 + t^2 s^2 / 2 + log Phi(t s).
    """
    scale = np.asarray(scale, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(scale < 0) or np.any(t < 0):
        raise DomainError("scale and t must be nonnegative")
    ts = t * scale
    return (math.log(2.0) + 0.5 * ts**2 + _log_std_normal_cdf(ts))[()]


def halfnormal_mgf(scale, t):
    """E[exp(t |X|)] for X ~ N(0, scale^2); equals 2 exp(t^2 s^2/2) Phi(t s)."""
    return np.exp(log_halfnormal_mgf(scale, t))[()]


@dataclasses.dataclass(frozen=True)
class RdpCurve:
    """Sampled (alpha, epsilon) pairs with a label naming the bound that made them."""

    alphas: np.ndarray
    epsilons: np.ndarray
    label: str = ""

    def __post_init__(self):
        alphas = np.atleast_1d(np.asarray(self.alphas, dtype=float))
        epsilons = np.atleast_1d(np.asarray(self.epsilons, dtype=float))
        if alphas.shape != epsilons.shape:
            raise DomainError("alphas and epsilons must have the same length")
        if alphas.size and (np.any(alphas <= 1.0) or np.any(np.diff(alphas) <= 0)):
            raise DomainError("alphas must be > 1 and strictly increasing")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "epsilons", epsilons)

    def __len__(self):
        return self.alphas.size


@dataclasses.dataclass(frozen=True)
class DpCurve:
    """Sampled (epsilon, delta) pairs."""

    epsilons: np.ndarray
    deltas: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "epsilons", np.atleast_1d(np.asarray(self.epsilons, dtype=float)))
        object.__setattr__(self, "deltas", np.atleast_1d(np.asarray(self.deltas, dtype=float)))


def default_alpha_grid():
    return DEFAULTS.alpha_grid()


def gaussian_rdp_curve(delta_f, sigma, alphas=None, label="gaussian_rdp"):
    alphas = default_alpha_grid() if alphas is None else np.asarray(alphas, dtype=float)
    return RdpCurve(alphas, gaussian_rdp(delta_f, sigma, alphas), label)


def rdp_epsilon_to_dp(curve, delta):
    """Smallest epsilon over the curve's orders with eps(a) + log(1/delta)/(a-1)."""
    if len(curve) == 0:
        raise DomainError("empty RDP curve")
    if not 0 < delta <= 1:
        raise DomainError("delta must lie in (0, 1]")
    vals = curve.epsilons + math.log(1.0 / delta) / (curve.alphas - 1.0)
    return float(np.min(vals))


def rdp_delta_at_epsilon(curve, epsilon):
    """delta(epsilon) = min_a exp((a-1)(eps(a) - epsilon)), clamped to [0, 1]."""
    if len(curve) == 0:
        raise DomainError("empty RDP curve")
    eps = np.asarray(epsilon, dtype=float)
    a1 = curve.alphas - 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        log_d = a1[:, None] * (curve.epsilons[:, None] - eps.reshape(1, -1))
    log_d = np.where(np.isnan(log_d), np.inf, log_d)
    out = np.exp(np.minimum(np.min(log_d, axis=0), 0.0))
    return out.reshape(eps.shape)[()]


def compose_rdp(curves):
    """Adaptive composition: pointwise sum of epsilons on a shared alpha grid."""
    curves = list(curves)
    if not curves:
        raise DomainError("nothing to compose")
    alphas = curves[0].alphas
    total = np.zeros_like(curves[0].epsilons)
    for c in curves:
        if c.alphas.shape != alphas.shape or not np.array_equal(c.alphas, alphas):
            raise DomainError("RDP curves must share the same alpha grid")
        total = total + c.epsilons
    label = "+".join(c.label for c in curves if c.label)
    return RdpCurve(alphas, total, label)


def scale_rdp(curve, k):
    """k-fold self-composition of an RDP curve."""
    return RdpCurve(curve.alphas, k * curve.epsilons, f"{k}x{curve.label}")
