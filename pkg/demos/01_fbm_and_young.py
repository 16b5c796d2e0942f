"""
Fractional Brownian motion and Young integrals
==============================================

Sample fBm two ways, compare the empirical covariance with the closed form,
then integrate one rough path against another.
"""

import numpy as np

from fbm_mdp import (FbmSpec, GridPath, fbm_covariance, kernel_norm_sq, lambda_alpha, sample_fbm,
                     w_alpha_one_norm, young_integral)

H, M, n = 0.75, 512, 4000

# %% Covariance at (1/2, 1) from exact Cholesky paths and from the Volterra kernel
for method in ("cholesky", "volterra"):
    X = sample_fbm(FbmSpec(H, 1, 1.0, M, seed=0, method=method), n).values[..., 0]
    emp = np.mean(X[:, M // 2] * X[:, M])
    print(f"{method:9s} Cov(B_0.5, B_1) = {emp:.4f}   exact {fbm_covariance(0.5, 1.0, H):.4f}")

# %% The kernel squared integrates to T^(2H)
for T in (1.0, 2.0):
    print(f"int K(T,s)^2 ds at T={T}: {kernel_norm_sq(H, T, 2048):.5f}  vs  {T ** (2 * H):.5f}")

# %% Young integral of one fBm path against another, with integration by parts
paths = sample_fbm(FbmSpec(0.8, 2, 1.0, 1024, seed=1, method="circulant")).values
g, h = GridPath(1.0, paths[:, :1]), GridPath(1.0, paths[:, 1:])
gh = young_integral(g, h, alpha=0.3).values[-1, 0]
hg = young_integral(h, g, alpha=0.3).values[-1, 0]
print(f"int g dh + int h dg = {gh + hg:.5f},  g(1)h(1) = {paths[-1, 0] * paths[-1, 1]:.5f}")

# %% ... and the bound |int g dh| <= Lambda(h) ||g||_{alpha,1}
print(f"|int g dh| = {abs(gh):.4f} <= {lambda_alpha(h, 0.3) * w_alpha_one_norm(g, 0.3):.4f}")
