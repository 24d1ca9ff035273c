"""Compare delta(eps) of every single-release bound for one setting.

Run: python3 demos/bound_comparison.py
"""
import numpy as np

from objpert import accounting as A, dp_core
from objpert.accounting import MechanismParams

p = MechanismParams(sigma=5.0, lam=20.0, beta=1.0, grad_bound=1.0)
rdp = A.rdp_curve(p, "rdp_glm")

print(f"sigma={p.sigma}  lambda={p.lam}  beta={p.beta}  L={p.grad_bound}\n")
print(f"{'eps':>5} {'gaussian lower':>15} {'hockey-stick':>13} {'RDP converted':>14} {'Kifer':>10}")
for eps in np.linspace(0.25, 3.0, 12):
    kif = A.kifer_delta(p, eps)
    kif = "n/a" if kif is A.NOT_APPLICABLE else f"{kif:.3e}"
    print(f"{eps:5.2f} {dp_core.gaussian_hs_delta(1.0, p.sigma, eps):15.3e} "
          f"{A.objpert_hs_delta(p, eps):13.3e} {dp_core.rdp_delta_at_epsilon(rdp, eps):14.3e} {kif:>10}")

# The noise each bound needs for the same target.
print("\nsigma needed for (eps=1, delta=1e-5):")
for kind in ("hs_analytic", "rdp_glm", "kifer"):
    print(f"  {kind:12s} {A.calibrate_sigma(1.0, 1e-5, p, kind):.3f}")
