"""
Rate functions from the skeleton equation
=========================================

The skeleton is linear in the control, so the cheapest control reaching a
given endpoint solves a weighted least-norm problem.  For pure noise the cost
is delta^2 / (2 T^(2H)); the exact Gaussian tail shows the moderate deviation
sequence creeping toward minus that value.
"""

from fbm_mdp import ScaleParams
from fbm_mdp.mdp import empirical_mdp_rate, rate_function_endpoint, skeleton_from_system
from fbm_mdp.systems import ss_free, ss_lin, ss_nl

for spec in (ss_free(), ss_lin(), ss_nl()):
    prob = skeleton_from_system(spec, M=512)
    sol = rate_function_endpoint(prob, [1.0])
    print(f"{spec.name:8s} I(z_T = 1) = {sol.cost:.5f}   reached z_T = "
          f"{sol.achieved_path.values[-1, 0]:.6f}")

# %% b(eps) log P(|z_T| >= 1) for f = 0, sigma = 1
chain = [ScaleParams(e, 0.4) for e in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6)]
rep = empirical_mdp_rate(ss_free(), chain, 1.0, 20_000, seed=0)
for r in rep.rows:
    if r["quantity"] in ("exact_bylogp", "mc_bylogp"):
        print(f"eps={r['epsilon']:8.0e}  {r['quantity']:13s} {r['estimate']: .4f}")
print("rate", rep.summary["rate"])
