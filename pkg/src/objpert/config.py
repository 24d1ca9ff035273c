"""Fixed numerical constants shared by the accountants and solvers.

Every reported number in the package depends only on these values, so they
live in one frozen record instead of being scattered as keyword defaults.
"""

import dataclasses

import numpy as np


@dataclasses.dataclass(frozen=True)
class NumericDefaults:
    # Renyi orders used whenever a curve is sampled without an explicit grid.
    alpha_min: float = 1.0 + 1e-4
    alpha_max: float = 512.0
    alpha_points: int = 200

    # Noise calibration by bisection over log(sigma).
    sigma_lo: float = 1e-6
    sigma_hi: float = 1e6
    sigma_rel_tol: float = 1e-6

    # PLRV discretisation.
    plrv_spacing: float = 5e-4
    plrv_tail_widths: float = 32.0  # right edge = shift + this many scales; tail ~1e-225
    plrv_max_cells: int = 2**21
    # Convolutions whose size product is below this use exact direct summation;
    # larger ones fall back to FFT, whose round-off floor is ~1e-16 absolute.
    plrv_direct_limit: float = 5e9

    # Solvers.
    sag_step_factor: float = 1.0 / 16.0
    sag_max_epochs: int = 5_000
    max_iters: int = 200_000
    reference_max_iters: int = 2_000_000

    def alpha_grid(self):
        return np.geomspace(self.alpha_min, self.alpha_max, self.alpha_points)


DEFAULTS = NumericDefaults()
