"""Privacy bounds for objective perturbation and its approximate-minimum variant.

Every function takes a :class:`MechanismParams` record. ``grad_bound`` is the
per-example gradient bound: the Lipschitz constant of an unclipped loss, or
the clip threshold C of a clipped one.
"""

import dataclasses
import math
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from objpert import dp_core
from objpert.config import DEFAULTS
from objpert.errors import CalibrationError, DomainError

BOUND_KINDS = (
    "rdp_glm",
    "rdp_glm_alpha1",
    "rdp_linearized",
    "rdp_nonglm",
    "hs_analytic",
    "kifer",
    "gaussian_lower_rdp",
    "gaussian_lower_hs",
    "amp_rdp",
    "amp_plrv",
)

_RDP_KINDS = ("rdp_glm", "rdp_linearized", "rdp_nonglm", "gaussian_lower_rdp", "amp_rdp")


@dataclasses.dataclass(frozen=True)
class MechanismParams:
    """Inputs of objective perturbation with optional output noise.

    Args:
      sigma: std of the linear perturbation b.
      lam: ridge coefficient lambda.
      beta: smoothness of the per-example loss.
      grad_bound: bound on per-example gradient norms.
      tau: gradient-norm stopping threshold (0 means exact minimisation).
      sigma_out: std of the output perturbation.
      dim: parameter dimension d.
      n: dataset size, when known.
    """

    sigma: float
    lam: float
    beta: float
    grad_bound: float
    tau: float = 0.0
    sigma_out: float = 0.0
    dim: int = 1
    n: Optional[int] = None

    def __post_init__(self):
        for name in ("sigma", "lam", "beta", "grad_bound", "tau", "sigma_out"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")
        if self.dim < 1:
            raise DomainError("dim must be at least 1")

    def with_sigma(self, sigma):
        return dataclasses.replace(self, sigma=sigma)


class NotApplicable:
    """Returned by bounds whose preconditions on epsilon fail."""

    def __repr__(self):
        return "NotApplicable"

    def __bool__(self):
        return False


NOT_APPLICABLE = NotApplicable()


def _check(p, need_sigma=True):
    if not p.lam > p.beta:
        raise DomainError(f"lambda ({p.lam}) must exceed beta ({p.beta})")
    if need_sigma and not p.sigma > 0:
        raise DomainError("sigma must be positive")


def leading_term(p):
    """|log(1 - beta/lambda)|, the Jacobian part of every bound."""
    _check(p, need_sigma=False)
    return -math.log1p(-p.beta / p.lam)


def objpert_rdp(p, alpha):
    """RDP epsilon of objective perturbation on a GLM at order ``alpha`` >= 1.

    At alpha = 1 the KL form with a unit MGF argument is used.
    """
    _check(p)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 1):
        raise DomainError("alpha must be >= 1")
    s = p.grad_bound / p.sigma
    base = leading_term(p) + 0.5 * s**2
    a1 = alpha - 1.0
    safe = np.where(a1 > 0, a1, 1.0)
    mgf = dp_core.log_halfnormal_mgf(s, safe)
    out = np.where(a1 > 0, mgf / safe, dp_core.log_halfnormal_mgf(s, 1.0))
    return (base + out)[()]


def objpert_hs_delta(p, epsilon):
    """Tight-style delta(epsilon) from the hockey-stick analysis of the ObjPert PLRV."""
    _check(p)
    eps = np.asarray(epsilon, dtype=float)
    L, sigma = p.grad_bound, p.sigma
    mu = 0.5 * (L / sigma) ** 2
    # Shift by -|log(1 - beta/lam)| with threshold L^2/(2 sigma^2). The other reading,
    # +|log| with L^2/sigma^2, is not used: it yields smaller, unsupported deltas.
    eps_t = eps - leading_term(p)
    eps_h = eps_t - mu
    hi = 2.0 * dp_core.gaussian_hs_delta(L, sigma, np.maximum(eps_t, mu))
    at_mu = 2.0 * dp_core.gaussian_hs_delta(L, sigma, mu)
    e = np.exp(np.minimum(eps_h, 0.0))
    lo = (1.0 - e) + e * at_mu
    out = np.where(eps_h >= 0, hi, lo)
    return np.clip(out, 0.0, 1.0)[()]


def kifer_delta(p, epsilon):
    """delta from the classical (epsilon, delta) analysis, or NOT_APPLICABLE.

    Applies only when lambda >= 2 beta / epsilon.
    """
    if not p.sigma > 0:
        raise DomainError("sigma must be positive")
    eps = float(epsilon)
    if eps <= 0 or eps < 2.0 * p.beta / p.lam:
        return NOT_APPLICABLE
    L = p.grad_bound
    if L == 0:
        return 0.0
    arg = (p.sigma * eps / L) ** 2 - 4.0 * eps
    if arg < 0:
        return 1.0
    return min(1.0, 2.0 * math.exp(-arg / 8.0))


def kifer_sigma(epsilon, delta, grad_bound):
    """Closed-form noise for the classical analysis: L sqrt(8 log(2/delta) + 4 eps) / eps."""
    return grad_bound * math.sqrt(8.0 * math.log(2.0 / delta) + 4.0 * epsilon) / epsilon


def output_sensitivity(p):
    """L2 sensitivity 2 tau / lambda of an approximate minimiser."""
    return 2.0 * p.tau / p.lam


def amp_rdp(p, alpha):
    """RDP of the approximate-minimum release: ObjPert plus the output Gaussian."""
    if p.tau > 0 and not p.sigma_out > 0:
        raise DomainError("tau > 0 requires sigma_out > 0")
    eps = objpert_rdp(p, alpha)
    if p.tau == 0:
        return eps
    return eps + dp_core.gaussian_rdp(output_sensitivity(p), p.sigma_out, alpha)


def _linearized_value(p, a1, p_hat):
    q_hat = p_hat / (p_hat - 1.0)
    s2 = (p.grad_bound / p.sigma) ** 2
    x = 2.0 * q_hat * a1 * p.beta / p.lam
    if x >= 1.0:  # rounding at the edge of the admissible range
        return math.inf
    cross = p_hat * a1**2 * s2 / 2.0 - 0.5 / q_hat * math.log1p(-x)
    return leading_term(p) + 0.5 * s2 + cross / a1


def objpert_rdp_linearized(p, alpha):
    """RDP from linearising the Jacobian term, optimised over the Hoelder pair.

    Returns ``math.inf`` where the chi-square MGF does not exist for any
    admissible exponent, i.e. when 2 (alpha - 1) beta / lambda >= 1.
    """
    _check(p)
    alpha = float(alpha)
    if alpha <= 1:
        raise DomainError("alpha must exceed 1")
    a1 = alpha - 1.0
    s2 = (p.grad_bound / p.sigma) ** 2
    if p.beta == 0:
        return alpha * s2 / 2.0
    ratio = 2.0 * a1 * p.beta / p.lam
    if ratio >= 1.0:
        return math.inf
    # q_hat < 1/ratio  <=>  p_hat > p_min
    p_min = 1.0 / (1.0 - ratio)

    def obj(v):
        return _linearized_value(p, a1, p_min + math.exp(v))

    grid = np.linspace(-30.0, 30.0, 241)
    vals = np.array([obj(v) for v in grid])
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    best = float(vals[i])
    if hi > lo:
        res = optimize.minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        best = min(best, float(res.fun))
    return best


def log_chi_mgf(d, t):
    """log E[exp(t Z)] for Z ~ chi_d, t >= 0, by quadrature around the integrand's peak."""
    if d < 1:
        raise DomainError("d must be at least 1")
    if t < 0:
        raise DomainError("t must be nonnegative")
    log_norm = (d / 2.0 - 1.0) * math.log(2.0) + special.gammaln(d / 2.0)
    z_star = 0.5 * (t + math.sqrt(t * t + 4.0 * (d - 1)))

    def log_integrand(z):
        return (d - 1) * math.log(z) - 0.5 * z * z + t * z if z > 0 else -math.inf

    peak = log_integrand(z_star) if z_star > 0 else (0.0 if d == 1 else -math.inf)
    lo = max(0.0, z_star - 40.0)
    hi = z_star + 40.0
    pts = [z_star] if lo < z_star < hi else None
    val, _ = integrate.quad(lambda z: math.exp(log_integrand(z) - peak), lo, hi,
                            points=pts, epsabs=0.0, epsrel=1e-12, limit=500)
    return math.log(val) + peak - log_norm


def objpert_rdp_nonglm(p, alpha, squared=False):
    """RDP bound for general (non-GLM) convex losses in dimension ``p.dim``.

    The middle term is L/(2 sigma^2) by default; ``squared=True`` uses
    L^2/(2 sigma^2) instead, which is what the GLM bound's scaling suggests.
    """
    _check(p)
    alpha = float(alpha)
    if alpha <= 1:
        raise DomainError("alpha must exceed 1")
    L, sigma, d = p.grad_bound, p.sigma, p.dim
    middle = (L**2 if squared else L) / (2.0 * sigma**2)
    a1 = alpha - 1.0
    return d * leading_term(p) + middle + log_chi_mgf(d, a1 * L / sigma) / a1


def gaussian_lower_bounds(p, alphas=None, epsilons=None):
    """RDP and DP curves of the Gaussian mechanism with sensitivity L and noise sigma.

    Objective perturbation with a linear loss is exactly this mechanism, so
    no valid ObjPert bound can lie below these curves. lambda plays no role.
    """
    if not p.sigma > 0:
        raise DomainError("sigma must be positive")
    alphas = dp_core.default_alpha_grid() if alphas is None else np.asarray(alphas, float)
    eps = np.linspace(0.0, 10.0, 201) if epsilons is None else np.asarray(epsilons, float)
    rdp = dp_core.gaussian_rdp_curve(p.grad_bound, p.sigma, alphas, "gaussian_lower_rdp")
    dp = dp_core.DpCurve(eps, dp_core.gaussian_hs_delta(p.grad_bound, p.sigma, eps),
                         "gaussian_lower_hs")
    return rdp, dp


def rdp_curve(p, kind, alphas=None):
    """Sample an RDP bound on an alpha grid (default grid if None)."""
    alphas = dp_core.default_alpha_grid() if alphas is None else np.asarray(alphas, float)
    if kind == "rdp_glm":
        eps = objpert_rdp(p, alphas)
    elif kind == "amp_rdp":
        eps = amp_rdp(p, alphas)
    elif kind == "rdp_linearized":
        eps = np.array([objpert_rdp_linearized(p, a) for a in alphas])
    elif kind == "rdp_nonglm":
        eps = np.array([objpert_rdp_nonglm(p, a) for a in alphas])
    elif kind == "gaussian_lower_rdp":
        eps = dp_core.gaussian_rdp(p.grad_bound, p.sigma, alphas)
    else:
        raise DomainError(f"{kind!r} is not an RDP bound kind")
    return dp_core.RdpCurve(alphas, eps, kind)


def delta_at(p, kind, epsilon):
    """delta(epsilon) under bound ``kind``; RDP kinds go through the default grid."""
    if kind in _RDP_KINDS:
        curve = rdp_curve(p, kind)
        finite = np.isfinite(curve.epsilons)
        if not np.any(finite):
            return 1.0
        curve = dp_core.RdpCurve(curve.alphas[finite], curve.epsilons[finite], kind)
        return float(dp_core.rdp_delta_at_epsilon(curve, epsilon))
    if kind == "hs_analytic":
        return float(objpert_hs_delta(p, epsilon))
    if kind == "gaussian_lower_hs":
        return float(dp_core.gaussian_hs_delta(p.grad_bound, p.sigma, epsilon))
    if kind == "kifer":
        d = kifer_delta(p, epsilon)
        if d is NOT_APPLICABLE:
            raise DomainError("classical bound requires lambda >= 2 beta / epsilon")
        return float(d)
    if kind == "amp_plrv":
        from objpert import plrv

        return float(plrv.delta_from_plrv(plrv.build_amp_plrv(p), epsilon))
    if kind == "rdp_glm_alpha1":
        raise DomainError("the alpha = 1 bound is a KL statement and yields no delta")
    raise DomainError(f"unknown bound kind {kind!r}")


def calibrate_sigma(target_epsilon, target_delta, p, kind):
    """Smallest sigma with delta(target_epsilon) <= target_delta under ``kind``.

    Bisection over log(sigma) in the configured bracket; the returned value is
    the feasible end of the final bracket. ``p.sigma`` is ignored.

    Raises:
      DomainError: bad targets or parameters.
      CalibrationError: the target is not met even at the largest sigma.
    """
    if not 0 < target_delta < 1:
        raise DomainError("target delta must lie in (0, 1)")
    if kind not in BOUND_KINDS:
        raise DomainError(f"unknown bound kind {kind!r}")
    if kind == "kifer" and kifer_delta(p.with_sigma(1.0), target_epsilon) is NOT_APPLICABLE:
        raise CalibrationError("classical bound does not apply at this epsilon and lambda")

    def ok(log_s):
        return delta_at(p.with_sigma(math.exp(log_s)), kind, target_epsilon) <= target_delta

    lo, hi = math.log(DEFAULTS.sigma_lo), math.log(DEFAULTS.sigma_hi)
    if not ok(hi):
        raise CalibrationError(
            f"delta <= {target_delta} at epsilon = {target_epsilon} unreachable "
            f"with sigma <= {DEFAULTS.sigma_hi}"
        )
    if ok(lo):
        return math.exp(lo)
    tol = math.log1p(DEFAULTS.sigma_rel_tol)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return math.exp(hi)
