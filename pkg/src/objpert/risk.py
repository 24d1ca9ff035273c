"""Utility guarantees: excess empirical risk, GD iteration counts, rate-optimal tuning."""

import dataclasses
import math

import numpy as np

from objpert import accounting, dp_core, glm_loss
from objpert.errors import DomainError


@dataclasses.dataclass(frozen=True)
class RiskInputs:
    """Parameters entering the excess-risk bound.

    ``L`` is the per-example gradient bound actually in force, i.e. the
    smaller of the clip threshold and the loss's own Lipschitz constant.
    ``domain_norm`` bounds ||x||.
    """

    n: int
    d: int
    L: float
    beta: float
    lam: float
    sigma: float
    sigma_out: float
    tau: float
    theta_star_norm: float
    domain_norm: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise DomainError(f"{f.name} must be nonnegative")
        if not self.lam > 0:
            raise DomainError("lambda must be positive")


VARIANTS = ("errata", "appendix")


def excess_risk_bound(r, variant="errata"):
    """Upper bound on E[L(released)] - L(theta*).

    ``variant="errata"`` charges (n beta ||X||^2 + lam) d sigma^2 / (2 lam^2)
    for the objective noise; ``"appendix"`` charges d sigma^2 / (2 lam).
    """
    approx = r.n * r.L * (r.tau / r.lam + r.sigma_out * math.sqrt(r.d))
    if variant == "errata":
        noise = (r.n * r.beta * r.domain_norm**2 + r.lam) * r.d * r.sigma**2 / (2.0 * r.lam**2)
    elif variant == "appendix":
        noise = r.d * r.sigma**2 / (2.0 * r.lam)
    else:
        raise DomainError(f"unknown variant {variant!r}")
    return approx + noise + 0.5 * r.lam * r.theta_star_norm**2


def empirical_excess_risk(X, y, loss, theta_released, theta_star):
    """sum f(x^T theta_released) - sum f(x^T theta_star) under the unclipped loss."""
    if isinstance(loss, str):
        loss = glm_loss.get_loss(loss)
    X = np.asarray(X, dtype=float)
    a = np.sum(glm_loss.loss_value(loss, X @ np.asarray(theta_released, float), y))
    b = np.sum(glm_loss.loss_value(loss, X @ np.asarray(theta_star, float), y))
    return float(a - b)


def gd_iteration_bound(n, beta, lam, gamma, r0):
    """Iterations of GD with step 1/(n beta + lam) that guarantee |grad| <= gamma.

    T = log(Lsm^2 r0^2 / gamma^2) / log(1 + lam / (Lsm - lam)), Lsm = n beta + lam.
    Returns 1 when Lsm == lam and 0 when T <= 0.
    """
    if not gamma > 0 or not lam > 0 or r0 < 0:
        raise DomainError("need gamma > 0, lam > 0, r0 >= 0")
    lsm = n * beta + lam
    if lsm == lam:
        return 1.0
    if r0 == 0:
        return 0.0
    t = 2.0 * math.log(lsm * r0 / gamma) / math.log1p(lam / (lsm - lam))
    return max(t, 0.0)


def calibrate_optimal_rate(epsilon, delta, L, d, theta_star_norm_bound):
    """Rate-optimal (sigma, lam) with unit proportionality constants.

    Advisory only: certify the resulting privacy with :func:`certified_epsilon`.
    """
    if min(epsilon, L, d, theta_star_norm_bound) <= 0 or not 0 < delta < 1:
        raise DomainError("need positive inputs and delta in (0, 1)")
    log_term = math.log(1.0 / delta)
    sigma = L * math.sqrt(d * log_term) / epsilon
    lam = d * L * math.sqrt(log_term) / (epsilon * theta_star_norm_bound)
    return sigma, lam


def certified_epsilon(sigma, lam, beta, L, delta):
    """epsilon at ``delta`` from the RDP bound, for checking advisory tuning."""
    p = accounting.MechanismParams(sigma=sigma, lam=lam, beta=beta, grad_bound=L)
    return dp_core.rdp_epsilon_to_dp(accounting.rdp_curve(p, "rdp_glm"), delta)
