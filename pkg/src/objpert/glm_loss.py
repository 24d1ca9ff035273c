"""Scalar GLM losses f(u; y) and their gradient-clipped counterparts.

A GLM loss acts on the margin u = x^T theta, so clipping the per-example
gradient f'(u; y) x at norm C is the same as clamping the scalar derivative
at +-C/||x||. The clipped loss is the convex function whose derivative is that
clamp: it agrees with f between two boundary margins and continues linearly
outside them.

All functions broadcast over numpy arrays.
"""

import dataclasses
from typing import Optional

import numpy as np
from scipy import special

from objpert.errors import DomainError


@dataclasses.dataclass(frozen=True)
class GlmLoss:
    """A scalar loss f(u; y) with smoothness ``beta`` and gradient bound ``lipschitz``.

    ``lipschitz`` bounds |f'| (hence ||grad|| when ||x|| <= 1) and is None when
    the loss has unbounded slope.
    """

    kind: str
    beta: float
    lipschitz: Optional[float]


LOGISTIC = GlmLoss("logistic", 0.25, 1.0)
SQUARED = GlmLoss("squared", 1.0, None)
# f(u; y) = u. Not a learning loss; it is the probe under which objective
# perturbation reduces to the Gaussian mechanism.
LINEAR = GlmLoss("linear", 0.0, 1.0)

_LOSSES = {loss.kind: loss for loss in (LOGISTIC, SQUARED, LINEAR)}


def get_loss(kind):
    try:
        return _LOSSES[kind]
    except KeyError:
        raise DomainError(f"unknown loss kind {kind!r}") from None


def check_labels(loss, y):
    y = np.asarray(y, dtype=float)
    if loss.kind == "logistic":
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DomainError("logistic labels must be 0 or 1")
    elif loss.kind == "squared":
        if not np.all(np.abs(y) <= 1.0):
            raise DomainError("squared-loss labels must satisfy |y| <= 1")
    return y


def _softplus(u):
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def loss_value(loss, u, y):
    """f(u; y)."""
    u = np.asarray(u, dtype=float)
    y = check_labels(loss, y)
    if loss.kind == "logistic":
        out = _softplus(u) - y * u
    elif loss.kind == "squared":
        out = 0.5 * (y - u) ** 2
    else:
        out = u + 0.0 * y
    return out[()]


def loss_deriv(loss, u, y):
    """f'(u; y), the derivative in the margin."""
    u = np.asarray(u, dtype=float)
    y = check_labels(loss, y)
    if loss.kind == "logistic":
        out = special.expit(u) - y
    elif loss.kind == "squared":
        out = u - y
    else:
        out = np.ones_like(u) + 0.0 * y
    return out[()]


def loss_second_deriv(loss, u, y):
    u = np.asarray(u, dtype=float)
    y = check_labels(loss, y)
    if loss.kind == "logistic":
        out = special.expit(u) * special.expit(-u)
    elif loss.kind == "squared":
        out = np.ones_like(u) + 0.0 * y
    else:
        out = np.zeros_like(u) + 0.0 * y
    return out[()]


@dataclasses.dataclass(frozen=True)
class ClipBoundaries:
    """Margins outside which the clipped loss is linear with slope ``slope``."""

    u_low: np.ndarray
    u_high: np.ndarray
    slope: np.ndarray


def clip_boundaries(loss, clip, x_norm, y):
    """Boundary margins of the clipped loss for examples with norm ``x_norm``.

    Args:
      loss: the base GlmLoss.
      clip: gradient-norm threshold C > 0.
      x_norm: ||x||_2 per example (scalar or array).
      y: labels.

    Returns:
      ClipBoundaries with u_low = sup{u : f'(u) < -C/||x||} (or -inf when that
      set is empty), u_high = inf{u : f'(u) > C/||x||} (or +inf), and the slope
      C/||x||. Zero-norm examples get (-inf, +inf).
    """
    if clip <= 0:
        raise DomainError("clip threshold must be positive")
    x_norm = np.asarray(x_norm, dtype=float)
    y = check_labels(loss, y)
    x_norm, y = np.broadcast_arrays(x_norm, y)
    with np.errstate(divide="ignore"):
        slope = np.where(x_norm > 0, clip / np.where(x_norm > 0, x_norm, 1.0), np.inf)
    if loss.kind == "squared":
        u_low = y - slope
        u_high = y + slope
    elif loss.kind == "logistic":
        lo = y - slope
        hi = y + slope
        lo_ok = (lo > 0) & (lo < 1)
        hi_ok = (hi > 0) & (hi < 1)
        u_low = np.where(lo_ok, special.logit(np.where(lo_ok, lo, 0.5)), -np.inf)
        u_high = np.where(hi_ok, special.logit(np.where(hi_ok, hi, 0.5)), np.inf)
    else:
        # f' == 1 everywhere: either nothing is clipped or everything is.
        u_low = np.full_like(slope, -np.inf)
        u_high = np.where(slope >= 1.0, np.inf, -np.inf)
    return ClipBoundaries(u_low[()], u_high[()], slope[()])


@dataclasses.dataclass(frozen=True)
class ClippedGlmLoss:
    """The gradient-clipped version of ``base`` at threshold ``clip``."""

    base: GlmLoss
    clip: float

    def __post_init__(self):
        if not self.clip > 0:
            raise DomainError("clip threshold must be positive")

    @property
    def beta(self):
        return self.base.beta

    @property
    def grad_bound(self):
        if self.base.lipschitz is None:
            return self.clip
        return min(self.clip, self.base.lipschitz)

    def value(self, u, y, x_norm):
        return clipped_value(self, u, y, x_norm)

    def deriv(self, u, y, x_norm):
        return clipped_deriv(self, u, y, x_norm)


def clipped_value(cl, u, y, x_norm):
    """Value of the clipped loss at margin ``u``.

    Inside (u_low, u_high) this is f(u; y); outside it is the tangent line of f
    at the nearer boundary, which keeps the function continuous and convex.
    """
    u = np.asarray(u, dtype=float)
    bounds = clip_boundaries(cl.base, cl.clip, x_norm, y)
    u, y, u_low, u_high, slope = np.broadcast_arrays(
        u, np.asarray(y, dtype=float), bounds.u_low, bounds.u_high, bounds.slope
    )
    if cl.base.kind == "linear":
        return (np.minimum(slope, 1.0) * u)[()]
    out = loss_value(cl.base, u, y)
    out = np.array(out, dtype=float, ndmin=1).reshape(u.shape)
    below = u < u_low
    above = u > u_high
    if np.any(below):
        ul = u_low[below]
        out[below] = loss_value(cl.base, ul, y[below]) - slope[below] * (u[below] - ul)
    if np.any(above):
        uh = u_high[above]
        out[above] = loss_value(cl.base, uh, y[above]) + slope[above] * (u[above] - uh)
    return out[()]


def clipped_deriv(cl, u, y, x_norm):
    """Derivative of the clipped loss: f'(u; y) clamped to [-C/||x||, C/||x||].

    f' is nondecreasing, so the clamp coincides with the piecewise definition;
    at a boundary it returns the clamped slope.
    """
    bounds = clip_boundaries(cl.base, cl.clip, x_norm, y)
    d = loss_deriv(cl.base, u, y)
    return np.clip(d, -bounds.slope, bounds.slope)[()]


def per_example_grad(cl, theta, x, y):
    """Clipped gradient min(1, C/||g||) g of one example, g = f'(x^T theta; y) x."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if theta.shape != x.shape:
        raise DomainError("theta and x must have the same dimension")
    g = loss_deriv(cl.base, x @ theta, y) * x
    norm = np.linalg.norm(g)
    if norm > cl.clip:
        g = g * (cl.clip / norm)
    return g


def per_example_grads(cl, theta, X, y):
    """Row-wise clipped gradients for a design matrix ``X`` (n x d)."""
    X = np.asarray(X, dtype=float)
    x_norm = np.linalg.norm(X, axis=1)
    d = clipped_deriv(cl, X @ theta, y, x_norm)
    return np.asarray(d)[:, None] * X
