"""Privacy of k repeated ObjPert releases: numerical PLRV accounting vs RDP.

Run: python3 demos/composition.py
"""
from objpert import accounting as A, dp_core, plrv
from objpert.accounting import MechanismParams

p = MechanismParams(sigma=8.0, lam=10.0, beta=1.0, grad_bound=1.0)
base = plrv.build_objpert_plrv(p)
single = A.rdp_curve(p, "rdp_glm")

print("delta at eps=2 after k releases")
print(f"{'k':>3} {'PLRV grid':>12} {'RDP':>12}")
for k in (1, 2, 4, 8, 16):
    grid = plrv.self_compose(base, k)
    via_rdp = dp_core.rdp_delta_at_epsilon(dp_core.scale_rdp(single, k), 2.0)
    print(f"{k:3d} {plrv.delta_from_plrv(grid, 2.0):12.4e} {via_rdp:12.4e}")
print(f"\ngrid spacing {base.spacing}, truncated tail mass {base.tail_mass:.1e}")
