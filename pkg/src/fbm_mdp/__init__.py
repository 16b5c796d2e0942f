"""Numerical laboratory for fBm-driven slow-fast systems.

Modules: ``fracpath`` (fractional norms, Weyl derivatives, Young integrals),
``fbm`` (samplers, Volterra kernel, Cameron-Martin map), ``sde`` (solvers),
``averaging`` (averaged drift), ``mdp`` (skeletons and rate functions) and
``harness`` (experiments).
"""

from .errors import (BlowUpError, FactorizationError, NumericalError, StabilityError,
                     UnreachableTargetError)
from .fbm import (Control, FbmSpec, cameron_martin_apply, fbm_covariance, kernel_norm_sq,
                  sample_bm, sample_fbm, sample_fbm_volterra, volterra_kernel)
from .fracpath import (GridPath, holder_norm, lambda_alpha, riemann_stieltjes_sum,
                       w_alpha_inf_norm, w_alpha_one_norm, w_one_minus_alpha_norm, weyl_left,
                       weyl_right, young_integral)
from .sde import ScaleParams, SystemSpec, TwoScaleState

__all__ = [
    "BlowUpError", "FactorizationError", "NumericalError", "StabilityError",
    "UnreachableTargetError", "Control", "FbmSpec", "cameron_martin_apply", "fbm_covariance",
    "kernel_norm_sq", "sample_bm", "sample_fbm", "sample_fbm_volterra", "volterra_kernel",
    "GridPath", "holder_norm", "lambda_alpha", "riemann_stieltjes_sum", "w_alpha_inf_norm",
    "w_alpha_one_norm", "w_one_minus_alpha_norm", "weyl_left", "weyl_right", "young_integral",
    "ScaleParams", "SystemSpec", "TwoScaleState",
]

__version__ = "0.1.0"
