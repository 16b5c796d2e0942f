"""
Averaging a slow-fast system
============================

The fast Ornstein-Uhlenbeck variable has a Gaussian invariant law, so the
averaged slow drift is known in closed form.  Compare it with a time average
along the frozen fast process and with Gauss-Hermite quadrature, then watch the
slow component converge to the averaged ODE.
"""

import numpy as np

from fbm_mdp import ScaleParams
from fbm_mdp.averaging import averaging_gap, ergodic_f1bar, gauss_hermite_drift
from fbm_mdp.systems import a_function, f1bar_exact, ts_ou

spec = ts_ou()
exact = f1bar_exact("TS-OU")
gh = gauss_hermite_drift(spec.f1, a_function("TS-OU"))

# %% Three routes to the averaged drift
for x in (-1.0, 0.0, 1.5):
    e = ergodic_f1bar(spec, [x], n_paths=32)
    print(f"x={x:+.1f}  ergodic {e.value:.4f} +- {e.stderr:.4f}   "
          f"Gauss-Hermite {gh(np.array([[x]]))[0, 0]:.6f}   exact {exact(np.array([x]))[0]:.6f}")

# %% Strong averaging gap along an epsilon chain
for e in (1e-1, 1e-2):
    g = averaging_gap(spec, ScaleParams(e, 0.6), 100, 0, gh)
    print(f"eps={e:g}  E sup|x^eps - xbar|^2 = {g.value:.4g} +- {g.stderr:.2g}")
