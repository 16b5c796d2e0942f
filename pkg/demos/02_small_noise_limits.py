"""
Small-noise limit and CLT-scale fluctuations
============================================

As epsilon shrinks, x^eps approaches the noiseless path at rate epsilon in
mean square, and the rescaled deviation has a Gaussian limit whose variance is
a double sum over fBm increments.
"""

import numpy as np

from fbm_mdp import FbmSpec, ScaleParams, sample_fbm
from fbm_mdp.mdp import clt_variance_check, limit_variance
from fbm_mdp.sde import solve_ode, solve_single_scale
from fbm_mdp.systems import ss_lin

spec, M, n = ss_lin(), 512, 400
xlim = solve_ode(spec, T=1.0, M=M).values
B = sample_fbm(FbmSpec(0.75, 1, 1.0, M, seed=0, method="circulant"), n)

# %% Mean squared sup error along an epsilon chain
eps = np.array([1e-1, 1e-2, 1e-3])
err = []
for e in eps:
    x = solve_single_scale(spec, ScaleParams(e, 0.4), B).values
    err.append(np.mean(np.max((x - xlim)[..., 0] ** 2, axis=1)))
    print(f"eps={e:g}  E sup|x - x0|^2 = {err[-1]:.3g}")
print(f"log-log slope {np.polyfit(np.log(eps), np.log(err), 1)[0]:.3f}")

# %% Fluctuations on the h(eps) scale
print(f"limit variance {limit_variance(spec, M=M):.4f}")
rep = clt_variance_check(spec, [ScaleParams(1e-2, 0.4), ScaleParams(1e-3, 0.4)], 2000, 1, M=256)
for r in rep.rows:
    print(f"eps={r['epsilon']:g}  h^2 Var(z_T) = {r['estimate']:.4f} +- {r['stderr']:.4f}")
