"""Explicit solvers for single-scale and slow-fast systems driven by fBm (slow)
and Brownian motion (fast).

Callables are batched: a state array has shape ``(B, m)`` (and ``(B, n)`` for
the fast variable).  Drifts return ``(B, m)``; diffusions return ``(B, m, d)``
or anything that reshapes/broadcasts to it, so scalar elementwise functions
work unchanged when ``m = d = 1``.

All solvers use left-point (Euler) increments.  For the fBm integral this is
the Riemann-Stieltjes sum, which converges to the Young integral when the
Hölder exponents sum above one.
"""

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BlowUpError, StabilityError
from .fracpath import GridPath

BLOW_UP = 1e8


@dataclass(frozen=True)
class SystemSpec:
    """Drift/diffusion data and declared structural constants.

    ``L`` is the Lipschitz constant (for the fast drift in two-scale mode it
    sets the step-size guard), ``L_prime`` the linear-growth constant and
    ``beta1``, ``beta2`` the dissipativity constants of the fast equation.
    ``jacobian`` (single-scale ``Df``) is optional and only used to build
    skeleton problems.
    """

    mode: str
    m: int = 1
    n: int = 0
    d1: int = 1
    d2: int = 0
    f: Optional[Callable] = None
    sigma: Optional[Callable] = None
    f1: Optional[Callable] = None
    sigma1: Optional[Callable] = None
    f2: Optional[Callable] = None
    sigma2: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    x0: tuple = (0.0,)
    y0: tuple = ()
    L: float = 1.0
    L_prime: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.mode not in ("single_scale", "two_scale"):
            raise ValueError(f"unknown mode {self.mode!r}")
        for c in ("L", "L_prime", "beta1", "beta2"):
            if not getattr(self, c) > 0:
                raise ValueError(f"constant {c} must be positive")
        if self.mode == "single_scale":
            if self.f is None or self.sigma is None:
                raise ValueError("single-scale mode needs f and sigma")
        else:
            if None in (self.f1, self.sigma1, self.f2, self.sigma2):
                raise ValueError("two-scale mode needs f1, sigma1, f2, sigma2")
            if self.n < 1 or self.d2 < 1:
                raise ValueError("two-scale mode needs n >= 1 and d2 >= 1")
        if len(self.x0) != self.m:
            raise ValueError(f"x0 has length {len(self.x0)}, expected m={self.m}")
        if self.mode == "two_scale" and len(self.y0) != self.n:
            raise ValueError(f"y0 has length {len(self.y0)}, expected n={self.n}")

    @property
    def drift(self):
        """The slow drift: ``f`` (single scale) or ``f1`` (two scale)."""
        return self.f if self.mode == "single_scale" else self.f1

    def check_growth_in_y(self, xs, n_probe=64, seed=0):
        """Spot check ``sup_y |f1(x, y)| + |sigma2(x, y)| <= L (1 + |x|)``.

        Returns the list of probe points ``x`` where the check failed.
        """
        rng = np.random.default_rng(seed)
        bad = []
        for x in np.atleast_2d(xs):
            y = rng.normal(scale=10.0, size=(n_probe, self.n))
            xb = np.broadcast_to(x, (n_probe, self.m))
            v = np.linalg.norm(self.f1(xb, y), axis=-1) + np.linalg.norm(
                _mat(self.sigma2(xb, y), n_probe, self.n, self.d2), axis=(-2, -1))
            if v.max() > self.L * (1 + np.linalg.norm(x)) + 1e-12:
                bad.append(x)
        return bad


@dataclass(frozen=True)
class ScaleParams:
    """``epsilon`` and the moderate-deviation scale ``h(eps) = eps^(-theta/2)``."""

    epsilon: float
    theta: float = 0.5

    def __post_init__(self):
        if not 0 <= self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0 <= self.theta < 1:
            raise ValueError(f"theta must lie in [0, 1), got {self.theta}")

    @property
    def h_eps(self):
        return np.inf if self.epsilon == 0 else self.epsilon ** (-self.theta / 2)

    @property
    def b_eps(self):
        return self.epsilon ** self.theta

    @property
    def sqrt_eps(self):
        return np.sqrt(self.epsilon)

    @property
    def noise_scale(self):
        """``sqrt(eps) h(eps) = eps^((1-theta)/2)``."""
        return self.epsilon ** ((1.0 - self.theta) / 2)


@dataclass(frozen=True)
class TwoScaleState:
    x: GridPath
    y: GridPath

    def __post_init__(self):
        if not self.x.same_grid(self.y):
            raise ValueError("slow and fast paths must share a grid")

    def to_csv(self, path):
        if self.x.values.ndim != 2:
            raise ValueError("CSV export needs a single path, not a batch")
        cols = [f"x_{c}" for c in range(self.x.d)] + [f"y_{c}" for c in range(self.y.d)]
        data = np.column_stack([self.x.times, self.x.values, self.y.values])
        np.savetxt(path, data, delimiter=",", header=",".join(["t"] + cols),
                   comments="", fmt="%.17g")


# ------------------------------------------------------------------ helpers

def _mat(s, B, rows, cols):
    s = np.asarray(s, dtype=float)
    if s.size == B * rows * cols:
        return s.reshape(B, rows, cols)
    return np.broadcast_to(s, (B, rows, cols))


def _vec(v, B, rows):
    v = np.asarray(v, dtype=float)
    if v.size == B * rows:
        return v.reshape(B, rows)
    return np.broadcast_to(v, (B, rows))


def _increments(paths, M):
    """Stack increments of several (possibly batched) grid paths to a common batch."""
    flat = []
    for p in paths:
        v = p.values
        if v.shape[-2] != M + 1:
            raise ValueError("driver grid mismatch")
        flat.append(np.diff(v.reshape(-1, M + 1, v.shape[-1]), axis=1))
    B = max(a.shape[0] for a in flat)
    for a in flat:
        if a.shape[0] not in (1, B):
            raise ValueError("incompatible batch sizes among drivers")
    batch_shape = max((p.values.shape[:-2] for p in paths), key=lambda s: int(np.prod(s)))
    return [np.broadcast_to(a, (B,) + a.shape[1:]) for a in flat], B, batch_shape


def _guard(state, i):
    if not np.all(np.isfinite(state)) or np.abs(state).max(initial=0.0) > BLOW_UP:
        raise BlowUpError(f"solution blow-up at step {i}")


def _pack(T, arr, batch_shape):
    return GridPath(T, arr.reshape(batch_shape + arr.shape[1:]))


def _x0(spec, x0):
    return np.asarray(spec.x0 if x0 is None else x0, dtype=float).reshape(spec.m)


def _control_incr(control, M, d, use_derivative=False):
    if control is None:
        return np.zeros((1, M, d))
    if control.u.M != M:
        raise ValueError("control grid mismatch")
    if use_derivative:
        inc = control.u_prime.values[:-1] * control.u.h
    else:
        inc = np.diff(control.u.values, axis=0)
    return inc.reshape(1, M, d)


# ------------------------------------------------------------ single scale

def solve_ode(spec, x0=None, T=1.0, M=1024, method="rk4", drift=None):
    """Deterministic limit ``dx = f(x) dt`` (RK4 by default, or explicit Euler)."""
    f = drift if drift is not None else spec.drift
    h = T / M
    x = _x0(spec, x0)[None, :]
    out = np.empty((M + 1, spec.m))
    out[0] = x[0]
    F = lambda z: _vec(f(z), 1, spec.m)
    for i in range(M):
        if method == "rk4":
            k1 = F(x)
            k2 = F(x + 0.5 * h * k1)
            k3 = F(x + 0.5 * h * k2)
            k4 = F(x + h * k3)
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        elif method == "euler":
            x = x + h * F(x)
        else:
            raise ValueError(f"unknown method {method!r}")
        _guard(x, i + 1)
        out[i + 1] = x[0]
    return GridPath(T, out)


def _single(spec, params, driver, control, x0, use_derivative):
    if spec.mode != "single_scale":
        raise ValueError("single-scale solver needs a single_scale spec")
    M, T, h = driver.M, driver.T, driver.h
    (dB,), B, bshape = _increments([driver], M)
    du = _control_incr(control, M, spec.d1, use_derivative)
    if control is not None and not np.isclose(control.T, T):
        raise ValueError("control grid mismatch")
    x = np.broadcast_to(_x0(spec, x0), (B, spec.m)).copy()
    out = np.empty((B, M + 1, spec.m))
    out[:, 0] = x
    se, sc = params.sqrt_eps, params.noise_scale
    for i in range(M):
        noise = se * dB[:, i]
        if control is not None:
            noise = noise + sc * du[:, i]
        sig = _mat(spec.sigma(x), B, spec.m, spec.d1)
        x = x + h * _vec(spec.f(x), B, spec.m) + np.einsum("bij,bj->bi", sig, noise)
        _guard(x, i + 1)
        out[:, i + 1] = x
    return _pack(T, out, bshape)


def solve_single_scale(spec, params, driver, x0=None):
    """``x_{i+1} = x_i + f(x_i) h + sqrt(eps) sigma(x_i) dB^H_i``."""
    return _single(spec, params, driver, None, x0, False)


def solve_controlled_single(spec, params, driver, control, x0=None, use_derivative=False):
    """Euler scheme for the controlled equation.

    The control enters through ``sqrt(eps) h(eps) sigma(x_i) du_i``.  By default
    ``du_i`` is the exact increment ``u(t_{i+1}) - u(t_i)``, which makes the
    scheme identical to the uncontrolled one driven by ``B + h(eps) u``.  With
    ``use_derivative=True`` the increment is ``u'(t_i) h`` instead.
    """
    return _single(spec, params, driver, control, x0, use_derivative)


def deviation_path(x_eps, x_limit, params):
    """``(x_eps - x_limit) / (sqrt(eps) h(eps))``."""
    if not x_eps.same_grid(x_limit):
        raise ValueError("grid mismatch")
    return GridPath(x_eps.T, (x_eps.values - x_limit.values) / params.noise_scale)


# --------------------------------------------------------------- two scale

def check_fast_step(spec, params, h):
    """Raise unless ``h / eps <= 0.05 / L`` (explicit Euler on the fast drift)."""
    if params.epsilon > 0 and h / params.epsilon > 0.05 / spec.L:
        raise StabilityError(
            f"grid too coarse for epsilon: h/eps = {h / params.epsilon:.3g} "
            f"exceeds 0.05/L = {0.05 / spec.L:.3g}")


def warn_fast_moment(spec, params):
    """Warn when ``sqrt(eps) h(eps) >= beta2 / 2``."""
    if params.noise_scale >= spec.beta2 / 2:
        warnings.warn(
            f"sqrt(eps)h(eps) exceeds beta2/2 ({params.noise_scale:.3g} >= {spec.beta2 / 2:.3g})",
            RuntimeWarning, stacklevel=3)


def _two_scale(spec, params, fbm_driver, bm_driver, u, v, x0, y0,
               freeze=None, stride=None, fast_control=True):
    if spec.mode != "two_scale":
        raise ValueError("two-scale solver needs a two_scale spec")
    if not fbm_driver.same_grid(bm_driver):
        raise ValueError("driver grid mismatch")
    M, T, h = fbm_driver.M, fbm_driver.T, fbm_driver.h
    check_fast_step(spec, params, h)
    warn_fast_moment(spec, params)
    (dB, dW), B, bshape = _increments([fbm_driver, bm_driver], M)
    du = _control_incr(u, M, spec.d1)
    dv = _control_incr(v, M, spec.d2)
    eps = params.epsilon
    se, sc = params.sqrt_eps, params.noise_scale
    fast_c = params.h_eps if fast_control and v is not None else 0.0
    if freeze is not None:
        freeze = np.broadcast_to(freeze, (B,) + freeze.shape[1:])
    x = np.broadcast_to(_x0(spec, x0), (B, spec.m)).copy()
    y = np.broadcast_to(np.asarray(spec.y0 if y0 is None else y0, float).reshape(spec.n),
                        (B, spec.n)).copy()
    xs = np.empty((B, M + 1, spec.m))
    ys = np.empty((B, M + 1, spec.n))
    xs[:, 0], ys[:, 0] = x, y
    for i in range(M):
        xf = x if freeze is None else freeze[:, (i // stride) * stride]
        s1 = _mat(spec.sigma1(x), B, spec.m, spec.d1)
        s2 = _mat(spec.sigma2(xf, y), B, spec.n, spec.d2)
        noise_x = se * dB[:, i] + sc * du[:, i]
        x_new = x + h * _vec(spec.f1(xf, y), B, spec.m) + np.einsum("bij,bj->bi", s1, noise_x)
        dy = h / eps * _vec(spec.f2(xf, y), B, spec.n) + np.einsum(
            "bij,bj->bi", s2, dW[:, i] / np.sqrt(eps) + fast_c * dv[:, i] / np.sqrt(eps))
        y = y + dy
        x = x_new
        _guard(x, i + 1)
        _guard(y, i + 1)
        xs[:, i + 1], ys[:, i + 1] = x, y
    return TwoScaleState(_pack(T, xs, bshape), _pack(T, ys, bshape))


def solve_two_scale(spec, params, fbm_driver, bm_driver, x0=None, y0=None):
    """Joint Euler scheme; the fast step uses ``h/eps`` drift and ``dW/sqrt(eps)`` noise."""
    if params.epsilon <= 0:
        raise ValueError("two-scale solver needs epsilon > 0")
    return _two_scale(spec, params, fbm_driver, bm_driver, None, None, x0, y0)


def solve_controlled_two_scale(spec, params, fbm_driver, bm_driver, controls,
                               x0=None, y0=None):
    """Controlled slow-fast system; ``controls = (u, v)`` with either entry None.

    ``u`` is an fBm Cameron-Martin control (slow equation, scale
    ``sqrt(eps) h(eps)``); ``v`` a Brownian one (``H = 1/2``, fast equation,
    scale ``h(eps)/sqrt(eps)``).
    """
    if params.epsilon <= 0:
        raise ValueError("two-scale solver needs epsilon > 0")
    u, v = controls
    return _two_scale(spec, params, fbm_driver, bm_driver, u, v, x0, y0)


def solve_khasminskii_auxiliary(spec, params, fbm_driver, bm_driver, controls, Delta,
                                x_tilde=None, x0=None, y0=None):
    """Auxiliary pair with the slow argument of ``f1, f2, sigma2`` frozen at
    ``x_tilde(t(Delta))``, ``t(Delta) = floor(t / Delta) Delta``.

    ``x_tilde`` is the slow path of the controlled system on the same drivers;
    it is computed when not supplied.  The auxiliary fast equation carries no
    control.  Returns the auxiliary :class:`TwoScaleState`.
    """
    h = fbm_driver.h
    stride = Delta / h
    if stride < 1 - 1e-9 or abs(stride - round(stride)) > 1e-9 * max(1.0, stride):
        raise ValueError(f"Delta={Delta} is not a multiple of the grid step {h}")
    stride = int(round(stride))
    if x_tilde is None:
        x_tilde = solve_controlled_two_scale(spec, params, fbm_driver, bm_driver,
                                             controls, x0, y0).x
    freeze = x_tilde.values.reshape(-1, fbm_driver.M + 1, spec.m)
    return _two_scale(spec, params, fbm_driver, bm_driver, controls[0], None, x0, y0,
                      freeze=freeze, stride=stride, fast_control=False)


def solve_frozen_fast(spec, x_frozen, T_long, M, seed, y0=None, n_paths=None,
                      first_path=0):
    """Euler-Maruyama for ``dy = f2(x, y) dt + sigma2(x, y) dW`` with ``x`` fixed."""
    from . import _rng
    from .fbm import sample_bm

    if spec.mode != "two_scale":
        raise ValueError("frozen fast process needs a two_scale spec")
    W = sample_bm(spec.d2, T_long, M, seed, n_paths, first_path, stream_id=_rng.FROZEN)
    return frozen_fast_from_bm(spec, x_frozen, W, y0)


def frozen_fast_from_bm(spec, x_frozen, W, y0=None):
    M, h = W.M, W.h
    (dW,), B, bshape = _increments([W], M)
    x = np.broadcast_to(np.asarray(x_frozen, float).reshape(spec.m), (B, spec.m))
    y0 = np.asarray(spec.y0 if y0 is None else y0, float)
    y = np.array(np.broadcast_to(y0.reshape(-1, spec.n), (B, spec.n)))
    out = np.empty((B, M + 1, spec.n))
    out[:, 0] = y
    for i in range(M):
        s2 = _mat(spec.sigma2(x, y), B, spec.n, spec.d2)
        y = y + h * _vec(spec.f2(x, y), B, spec.n) + np.einsum("bij,bj->bi", s2, dW[:, i])
        _guard(y, i + 1)
        out[:, i + 1] = y
    return _pack(W.T, out, bshape)
