"""Discretised privacy-loss random variables and their FFT composition.

A grid stores probability masses at points ``origin + i * spacing`` plus a
``tail_mass`` that lies somewhere to the right of the last point. Masses are
pushed to the right endpoint of each cell and the tail is charged in full, so
every delta computed from a grid is an upper bound on the exact one.
"""

import dataclasses
import math

import numpy as np
from scipy import signal, special

from objpert import accounting
from objpert.config import DEFAULTS
from objpert.errors import DomainError


@dataclasses.dataclass(frozen=True)
class PlrvGrid:
    origin: float
    spacing: float
    masses: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        if not self.spacing > 0:
            raise DomainError("grid spacing must be positive")
        masses = np.asarray(self.masses, dtype=float)
        if masses.ndim != 1 or masses.size == 0:
            raise DomainError("masses must be a nonempty 1-D array")
        object.__setattr__(self, "masses", masses)

    @property
    def points(self):
        return self.origin + self.spacing * np.arange(self.masses.size)

    @property
    def total_mass(self):
        return float(self.masses.sum()) + self.tail_mass

    def mean(self):
        """Mean of the gridded part (the tail is excluded)."""
        return float(np.dot(self.masses, self.points))


def point_mass(at, spacing):
    return PlrvGrid(float(at), spacing, np.ones(1), 0.0)


def _cell_masses(cdf_edges):
    m = np.diff(cdf_edges)
    return np.clip(m, 0.0, None)


def _spacing_for(width, spacing):
    cells = width / spacing
    if cells > DEFAULTS.plrv_max_cells:
        return width / DEFAULTS.plrv_max_cells
    return spacing


def build_objpert_plrv(p, spacing=None, right_edge=None):
    """Grid for |log(1 - beta/lambda)| + L^2/(2 sigma^2) + |N(0, L^2/sigma^2)|.

    Args:
      p: MechanismParams (lambda > beta, sigma > 0).
      spacing: cell width h; defaults to the configured value, widened if the
        grid would exceed the configured cell cap.
      right_edge: last grid point; defaults to shift + 32 L / sigma.
    """
    accounting._check(p)
    h = DEFAULTS.plrv_spacing if spacing is None else float(spacing)
    s = p.grad_bound / p.sigma
    shift = accounting.leading_term(p) + 0.5 * s**2
    if s == 0:
        return point_mass(shift, h)
    if right_edge is None:
        right_edge = shift + DEFAULTS.plrv_tail_widths * s
    if not right_edge > shift:
        raise DomainError("right_edge must exceed the shift")
    if spacing is None:
        h = _spacing_for(right_edge - shift, h)
    n_cells = int(math.ceil((right_edge - shift) / h))
    edges = np.arange(n_cells + 1) * h / s
    # |X| <= e has probability 2 Phi(e) - 1 = erf(e / sqrt 2)
    cdf = special.erf(edges / math.sqrt(2.0))
    masses = np.concatenate(([0.0], _cell_masses(cdf)))
    tail = float(special.erfc(edges[-1] / math.sqrt(2.0)))
    return PlrvGrid(shift, h, masses, tail)


def build_gaussian_plrv(delta_f, sigma_mech, spacing, left_edge=None, right_edge=None):
    """Grid for the Gaussian-mechanism PLRV, N(mu, 2 mu) with mu = Delta^2/(2 sigma^2).

    Mass left of ``left_edge`` joins the first cell (moving it right only
    inflates delta); mass right of ``right_edge`` becomes ``tail_mass``.
    """
    if not sigma_mech > 0:
        raise DomainError("sigma must be positive")
    h = float(spacing)
    mu = 0.5 * (delta_f / sigma_mech) ** 2
    sd = abs(delta_f) / sigma_mech
    if sd == 0:
        return point_mass(0.0, h)
    w = DEFAULTS.plrv_tail_widths * sd
    left = mu - w if left_edge is None else float(left_edge)
    right = mu + w if right_edge is None else float(right_edge)
    if not right > left:
        raise DomainError("right_edge must exceed left_edge")
    n_cells = int(math.ceil((right - left) / h))
    pts = left + h * np.arange(n_cells + 1)
    cdf = special.ndtr((pts - mu) / sd)
    masses = np.concatenate(([cdf[0]], _cell_masses(cdf)))
    tail = float(special.ndtr(-(pts[-1] - mu) / sd))
    return PlrvGrid(left, h, masses, tail)


def _convolve(a, b, method):
    if method == "auto":
        method = "direct" if a.size * b.size <= DEFAULTS.plrv_direct_limit else "fft"
    if method == "direct":
        # nonnegative sums: every output keeps full relative precision
        return np.convolve(a, b)
    if method == "fft":
        return np.clip(signal.fftconvolve(a, b), 0.0, None)
    raise DomainError(f"unknown convolution method {method!r}")


def compose_plrv(grids, method="auto"):
    """PLRV of the product mechanism: convolution of masses, sum of origins.

    ``method`` is "fft", "direct" or "auto" (direct for moderate sizes). FFT
    results carry absolute round-off near 1e-16, which swamps deep-tail deltas.
    """
    grids = list(grids)
    if not grids:
        raise DomainError("nothing to compose")
    h = grids[0].spacing
    out = grids[0]
    for g in grids[1:]:
        if not math.isclose(g.spacing, h, rel_tol=1e-12, abs_tol=0.0):
            raise DomainError("grids must share the same spacing")
        masses = _convolve(out.masses, g.masses, method)
        tail = 1.0 - (1.0 - out.tail_mass) * (1.0 - g.tail_mass)
        out = PlrvGrid(out.origin + g.origin, h, masses, tail)
    return out


def self_compose(grid, k, method="auto"):
    """k-fold composition by repeated squaring."""
    if k < 1:
        raise DomainError("k must be at least 1")
    result = None
    base = grid
    while k:
        if k & 1:
            result = base if result is None else compose_plrv([result, base], method)
        k >>= 1
        if k:
            base = compose_plrv([base, base], method)
    return result


def delta_from_plrv(grid, epsilon):
    """delta(eps) = E[1 - e^(eps - s)]_+ over the grid, plus the full tail mass."""
    eps = np.asarray(epsilon, dtype=float)
    s = grid.points
    flat = eps.reshape(-1)
    out = np.empty(flat.size)
    for i, e in enumerate(flat):
        keep = s > e
        out[i] = np.dot(grid.masses[keep], -np.expm1(e - s[keep]))
    out = np.clip(out + grid.tail_mass, 0.0, 1.0)
    return out.reshape(eps.shape)[()]


def build_amp_plrv(p, spacing=None, compositions=1, method="auto"):
    """PLRV of ``compositions`` approximate-minimum releases.

    Each release composes the ObjPert PLRV with the Gaussian PLRV of the
    output noise (sensitivity 2 tau / lambda, std sigma_out).
    """
    g = build_objpert_plrv(p, spacing=spacing)
    if p.tau > 0:
        if not p.sigma_out > 0:
            raise DomainError("tau > 0 requires sigma_out > 0")
        gauss = build_gaussian_plrv(accounting.output_sensitivity(p), p.sigma_out, g.spacing)
        g = compose_plrv([g, gauss], method)
    if compositions > 1:
        g = self_compose(g, compositions, method)
    return g


def tolerance(grid):
    """Discretisation error budget h + tail_mass reported alongside deltas."""
    return grid.spacing + grid.tail_mass
