"""Approximate minimisation of the perturbed, gradient-clipped objective.

The objective is

    L(theta) = sum_i f_C(x_i^T theta; y_i) + (lam/2) ||theta||^2 + b^T theta

with f_C the clipped GLM loss. Solvers stop at the first iterate whose full
gradient norm is at most ``tau`` and raise :class:`NonConvergenceError`
otherwise; nothing is released from an unconverged run.
"""

import dataclasses
from typing import Optional

import numba
import numpy as np

from objpert import accounting, dp_core, glm_loss
from objpert.config import DEFAULTS
from objpert.errors import DomainError, NonConvergenceError

STREAMS = {"objective": 0, "output": 1, "shuffle": 2}
OPTIMIZERS = ("gd", "agd", "sag")


@dataclasses.dataclass(frozen=True)
class RngSpec:
    """A seed plus one independent generator per stream name in ``STREAMS``."""

    seed: int

    def generator(self, stream):
        try:
            key = STREAMS[stream]
        except KeyError:
            raise DomainError(f"unknown rng stream {stream!r}") from None
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(key,)))


def sample_gaussian_vector(rng, d, sigma, stream="objective"):
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    if sigma == 0:
        return np.zeros(d)
    return sigma * rng.generator(stream).standard_normal(d)


class PerturbedObjective:
    """Sum of clipped GLM losses plus ridge and linear terms.

    Args:
      X: (n, d) features; n may be 0.
      y: (n,) labels.
      loss: a ClippedGlmLoss.
      lam: ridge coefficient (0 allowed for reference computations).
      b: linear perturbation, length d (zeros if None).
    """

    def __init__(self, X, y, loss, lam, b=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DomainError("X must be a 2-D array")
        self.X = X
        self.n, self.d = X.shape
        self.y = glm_loss.check_labels(loss.base, np.asarray(y, dtype=float).reshape(-1))
        if self.y.size != self.n:
            raise DomainError("X and y have different numbers of rows")
        self.loss = loss
        self.lam = float(lam)
        self.b = np.zeros(self.d) if b is None else np.asarray(b, dtype=float)
        if self.b.shape != (self.d,):
            raise DomainError("b must have length d")
        self.x_norm = np.linalg.norm(X, axis=1)
        self.slope = np.asarray(
            glm_loss.clip_boundaries(loss.base, loss.clip, self.x_norm, self.y).slope, dtype=float
        ).reshape(-1)

    @property
    def smoothness(self):
        """n beta + lam, the step-size constant for unit-norm features."""
        return self.n * self.loss.beta + self.lam

    def derivs(self, theta):
        if self.n == 0:
            return np.zeros(0)
        d = glm_loss.loss_deriv(self.loss.base, self.X @ theta, self.y)
        return np.clip(d, -self.slope, self.slope)

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        data = 0.0
        if self.n:
            data = float(np.sum(glm_loss.clipped_value(self.loss, self.X @ theta, self.y, self.x_norm)))
        return data + 0.5 * self.lam * float(theta @ theta) + float(self.b @ theta)

    def gradient(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise DomainError("theta has the wrong dimension")
        return self.X.T @ self.derivs(theta) + self.lam * theta + self.b


def full_gradient(obj, theta):
    return obj.gradient(theta)


def gd_solve(obj, theta0, tau, max_iters=None):
    """Gradient descent with step 1/(n beta + lam); returns (theta, iterations)."""
    if not tau > 0:
        raise DomainError("tau must be positive")
    max_iters = DEFAULTS.max_iters if max_iters is None else max_iters
    step = 1.0 / obj.smoothness
    theta = np.array(theta0, dtype=float)
    for k in range(max_iters + 1):
        g = obj.gradient(theta)
        gn = float(np.linalg.norm(g))
        if gn <= tau:
            return theta, k
        if k == max_iters:
            break
        theta = theta - step * g
    raise NonConvergenceError(f"gradient descent stopped at |grad| = {gn:.3e}", gn, max_iters)


def agd_solve(obj, theta0, tau, max_iters=None):
    """Nesterov acceleration with function-value restart.

    The gradient is checked at every extrapolated point and that point is
    returned, so the stopping rule applies to the released iterate.
    """
    if not tau > 0:
        raise DomainError("tau must be positive")
    max_iters = DEFAULTS.max_iters if max_iters is None else max_iters
    step = 1.0 / obj.smoothness
    x = np.array(theta0, dtype=float)
    x_prev = x.copy()
    f_x = obj.value(x)
    j = 0
    for k in range(max_iters + 1):
        mom = (j - 1.0) / (j + 2.0) if j > 0 else 0.0
        yk = x + mom * (x - x_prev)
        g = obj.gradient(yk)
        gn = float(np.linalg.norm(g))
        if gn <= tau:
            return yk, k
        if k == max_iters:
            break
        x_new = yk - step * g
        f_new = obj.value(x_new)
        if f_new > f_x and j > 0:
            # restart: drop momentum and take a plain step from x instead
            j = 0
            x_prev = x
            continue
        x_prev, x, f_x = x, x_new, f_new
        j += 1
    raise NonConvergenceError(f"accelerated descent stopped at |grad| = {gn:.3e}", gn, max_iters)


@numba.njit(cache=True)
def _clipped_deriv_scalar(kind, u, y, slope):
    if kind == 0:  # logistic
        if u >= 0:
            s = 1.0 / (1.0 + np.exp(-u))
        else:
            e = np.exp(u)
            s = e / (1.0 + e)
        d = s - y
    elif kind == 1:  # squared
        d = u - y
    else:  # linear
        d = 1.0
    if d > slope:
        return slope
    if d < -slope:
        return -slope
    return d


@numba.njit(cache=True)
def _sag_epoch(kind, X, y, slope, theta, stored, gsum, idx, step, lam, b, n):
    d = X.shape[1]
    for t in range(idx.shape[0]):
        i = idx[t]
        u = 0.0
        for j in range(d):
            u += X[i, j] * theta[j]
        new = _clipped_deriv_scalar(kind, u, y[i], slope[i])
        diff = new - stored[i]
        if diff != 0.0:
            for j in range(d):
                gsum[j] += diff * X[i, j]
            stored[i] = new
        for j in range(d):
            theta[j] -= step * (gsum[j] + lam * theta[j] + b[j]) / n


_KIND_CODES = {"logistic": 0, "squared": 1, "linear": 2}


def sag_solve(obj, theta0, tau, max_epochs=None, rng=None):
    """Stochastic averaged gradient on the averaged objective L / n.

    One stored scalar derivative per example; the ridge and linear parts are
    evaluated exactly at the current iterate. The full gradient is checked
    after every n inner steps. Returns (theta, inner_steps), where the count
    includes the n evaluations of the initial pass.
    """
    if not tau > 0:
        raise DomainError("tau must be positive")
    if obj.n < 1:
        raise DomainError("SAG needs at least one example")
    rng = RngSpec(0) if rng is None else rng
    gen = rng.generator("shuffle")
    max_epochs = DEFAULTS.sag_max_epochs if max_epochs is None else max_epochs
    n = obj.n
    step = DEFAULTS.sag_step_factor / (obj.loss.beta + obj.lam / n)
    theta = np.array(theta0, dtype=float)
    X = np.ascontiguousarray(obj.X)
    kind = _KIND_CODES[obj.loss.base.kind]
    slope = np.where(np.isfinite(obj.slope), obj.slope, np.finfo(float).max)
    stored = obj.derivs(theta).astype(float)
    gsum = X.T @ stored
    count = n
    g = obj.gradient(theta)
    gn = float(np.linalg.norm(g))
    if gn <= tau:
        return theta, 0
    for _ in range(max_epochs):
        idx = gen.integers(0, n, size=n)
        _sag_epoch(kind, X, obj.y, slope, theta, stored, gsum, idx, step, obj.lam, obj.b, float(n))
        count += n
        g = obj.gradient(theta)
        gn = float(np.linalg.norm(g))
        if gn <= tau:
            return theta, count
    raise NonConvergenceError(f"SAG stopped at |grad| = {gn:.3e}", gn, count)


def reference_minimizer(obj, tol=1e-12, theta0=None, max_iters=None):
    """High-accuracy minimiser used as a test oracle.

    Runs restarted accelerated descent until |grad| <= tol * max(1, |grad(theta0)|).
    """
    theta0 = np.zeros(obj.d) if theta0 is None else np.asarray(theta0, dtype=float)
    g0 = float(np.linalg.norm(obj.gradient(theta0)))
    target = tol * max(1.0, g0)
    max_iters = DEFAULTS.reference_max_iters if max_iters is None else max_iters
    theta, _ = agd_solve(obj, theta0, target, max_iters)
    return theta


@dataclasses.dataclass(frozen=True)
class FitReport:
    theta_tilde_p: np.ndarray
    theta_tilde: np.ndarray
    grad_norm_final: float
    iterations: int
    seed: int
    privacy: dp_core.RdpCurve
    status: str = "converged"
    preprocessing: Optional[dict] = None


def amp_fit(X, y, loss_kind, params, optimizer="gd", rng=None, clip=None, max_iters=None):
    """Approximate minima perturbation with gradient clipping.

    Args:
      X, y: training data with ||x|| <= 1.
      loss_kind: "logistic", "squared" or "linear".
      params: MechanismParams; sigma and sigma_out set the two noises, tau the
        stopping threshold and grad_bound the accounted gradient bound.
      optimizer: "gd", "agd" or "sag".
      rng: RngSpec; seed 0 when omitted.
      clip: clip threshold C, defaults to params.grad_bound.
      max_iters: iteration cap (epochs for SAG).

    Returns:
      FitReport whose ``privacy`` curve is the full release accounting.

    Raises:
      NonConvergenceError: the solver did not reach |grad| <= tau.
    """
    base = glm_loss.get_loss(loss_kind)
    if optimizer not in OPTIMIZERS:
        raise DomainError(f"unknown optimizer {optimizer!r}")
    if not params.lam > params.beta:
        raise DomainError("lambda must exceed beta")
    if params.beta < base.beta:
        raise DomainError("params.beta understates the loss smoothness")
    if not params.tau > 0:
        raise DomainError("tau must be positive")
    cl = glm_loss.ClippedGlmLoss(base, params.grad_bound if clip is None else clip)
    if cl.grad_bound > params.grad_bound:
        raise DomainError("clipped gradient bound exceeds params.grad_bound")
    rng = RngSpec(0) if rng is None else rng
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    b = sample_gaussian_vector(rng, d, params.sigma, "objective")
    obj = PerturbedObjective(X, y, cl, params.lam, b)
    theta0 = np.zeros(d)
    if optimizer == "gd":
        theta, iters = gd_solve(obj, theta0, params.tau, max_iters)
    elif optimizer == "agd":
        theta, iters = agd_solve(obj, theta0, params.tau, max_iters)
    else:
        theta, iters = sag_solve(obj, theta0, params.tau, max_iters, rng)
    grad_norm = float(np.linalg.norm(obj.gradient(theta)))
    released = theta + sample_gaussian_vector(rng, d, params.sigma_out, "output")
    privacy = accounting.rdp_curve(params, "amp_rdp")
    return FitReport(released, theta, grad_norm, iters, rng.seed, privacy)
