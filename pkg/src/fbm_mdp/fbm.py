"""Fractional Brownian motion: covariance, samplers, the Volterra kernel and
the Cameron-Martin map ``u = K_H u_dot``.

For ``H > 1/2`` the kernel factors as ``K_H(t, s) = s^(1/2-H) phi(t, s)`` with

    phi(t, s) = C_H int_s^t r^(H-1/2) (r - s)^(H-3/2) dr,
    C_H = c_H / Gamma(H - 1/2),
    c_H = sqrt(2H Gamma(3/2-H) Gamma(H+1/2) / Gamma(2-2H)).

``phi`` is bounded and homogeneous of degree ``2H - 1``, so all tables are
built on the unit-step grid and rescaled.  Tables are cached per ``(H, M)``.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.integrate import cumulative_trapezoid
from scipy.special import gamma, roots_jacobi, roots_legendre

from . import _rng
from .errors import FactorizationError
from .fracpath import GridPath, lag_weights

METHODS = ("cholesky", "volterra", "circulant")
_NQ = 10


@dataclass(frozen=True)
class FbmSpec:
    H: float
    d: int = 1
    T: float = 1.0
    M: int = 1024
    seed: int = 0
    method: str = "cholesky"

    def __post_init__(self):
        if not 0 < self.H < 1:
            raise ValueError(f"Hurst parameter must lie in (0, 1), got H={self.H}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.method == "volterra" and self.H < 0.5:
            raise ValueError("volterra sampler needs H >= 1/2")


@dataclass(frozen=True)
class Control:
    """A Cameron-Martin control on a uniform grid.

    ``dot_u`` holds finite nodal values of the L2 density, ``u = K_H dot_u``
    and ``u_prime`` its time derivative.  ``coeffs`` and ``basis`` record the
    representation the control was built from (see
    :func:`cameron_martin_apply`); ``cm_norm_sq`` is the discrete value of
    ``int |dot_u|^2`` in that representation.
    """

    dot_u: np.ndarray
    u: GridPath
    u_prime: GridPath
    cm_norm_sq: float
    H: float = 0.75
    coeffs: Optional[np.ndarray] = None
    basis: str = "nodal"

    @property
    def T(self):
        return self.u.T

    @property
    def M(self):
        return self.u.M

    @property
    def energy(self):
        return 0.5 * self.cm_norm_sq

    def in_ball(self, N):
        """Whether ``1/2 ||dot_u||^2 <= N``."""
        return self.energy <= N

    def scaled(self, c):
        coeffs = None if self.coeffs is None else c * self.coeffs
        return Control(c * self.dot_u, GridPath(self.T, c * self.u.values),
                       GridPath(self.T, c * self.u_prime.values),
                       c * c * self.cm_norm_sq, self.H, coeffs, self.basis)

    def refined(self, factor):
        """The same control on a grid ``factor`` times finer, by linear interpolation.

        Cameron-Martin paths are ``C^(H+1/2)``, so interpolating ``u`` costs
        ``O(h^2)`` while avoiding the dense ``(M+1)^2`` kernel at fine grids.
        ``cm_norm_sq`` is carried over; ``coeffs`` is dropped.
        """
        factor = int(factor)
        if factor < 1:
            raise ValueError(f"refinement factor must be a positive integer, got {factor}")
        M = self.M * factor
        s, t = np.linspace(0, self.T, self.M + 1), np.linspace(0, self.T, M + 1)

        def interp(a):
            a = np.asarray(a, float).reshape(self.M + 1, -1)
            return np.column_stack([np.interp(t, s, a[:, k]) for k in range(a.shape[1])])
        return Control(interp(self.dot_u), GridPath(self.T, interp(self.u.values)),
                       GridPath(self.T, interp(self.u_prime.values)), self.cm_norm_sq, self.H,
                       None, self.basis)

    @classmethod
    def zero(cls, H, T, M, d=1):
        return cameron_martin_apply(np.zeros((M + 1, d)), H, T)


def fbm_covariance(s, t, H):
    """``1/2 (t^2H + s^2H - |t - s|^2H)`` (broadcasts)."""
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("negative time")
    h2 = 2.0 * H
    out = 0.5 * (t ** h2 + s ** h2 - np.abs(t - s) ** h2)
    return out if out.ndim else float(out)


def c_H(H):
    return np.sqrt(2 * H * gamma(1.5 - H) * gamma(H + 0.5) / gamma(2 - 2 * H))


def _phi_const(H):
    return c_H(H) / gamma(H - 0.5)


# ----------------------------------------------------------------- samplers

@lru_cache(maxsize=8)
def _cholesky_factor(H, T, M):
    t = np.linspace(0.0, T, M + 1)[1:]
    cov = fbm_covariance(t[:, None], t[None, :], H)
    jitter = 1e-12 * np.trace(cov) / M
    for attempt in range(4):
        try:
            shift = 0.0 if attempt == 0 else jitter * 10 ** (attempt - 1)
            L = linalg.cholesky(cov + shift * np.eye(M), lower=True)
            L.setflags(write=False)
            return L
        except linalg.LinAlgError:
            continue
    raise FactorizationError("covariance factorization failed")


@lru_cache(maxsize=8)
def _circulant_sqrt_eigs(H, M):
    k = np.arange(M + 1, dtype=float)
    h2 = 2.0 * H
    gam = 0.5 * ((k + 1) ** h2 - 2 * k ** h2 + np.abs(k - 1) ** h2)
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise FactorizationError("covariance factorization failed: circulant embedding not PSD")
    return np.sqrt(np.clip(lam, 0.0, None) / (2 * M))


def _batch(n_paths):
    return 1 if n_paths is None else int(n_paths)


def _finish(values, T, n_paths):
    return GridPath(T, values[0] if n_paths is None else values)


def sample_fbm(spec, n_paths=None, first_path=0):
    """Sample fBm on the grid of ``spec``.

    Path ``p`` of a batch uses the random stream ``(seed, fbm, first_path + p)``,
    so batches can be split arbitrarily without changing any path.  Returns a
    single path when ``n_paths`` is None, else a batch of shape ``(n, M+1, d)``.
    """
    n = _batch(n_paths)
    M, d, h = spec.M, spec.d, spec.T / spec.M
    out = np.zeros((n, M + 1, d))
    if spec.method == "cholesky":
        L = _cholesky_factor(spec.H, spec.T, M)
        z = _rng.normals(spec.seed, _rng.FBM, n, (d, M), first_path)
        out[:, 1:, :] = np.swapaxes(z @ L.T, 1, 2)
    elif spec.method == "volterra":
        z = _rng.normals(spec.seed, _rng.FBM, n, (d, M), first_path)
        A = volterra_matrix(spec.H, spec.T, M)
        out[:, 1:, :] = np.swapaxes((np.sqrt(h) * z) @ A.T, 1, 2)
    else:
        sq = _circulant_sqrt_eigs(spec.H, M)
        z = _rng.normals(spec.seed, _rng.FBM, n, (d, 2, 2 * M), first_path)
        w = np.fft.fft(sq * (z[:, :, 0] + 1j * z[:, :, 1]), axis=-1)
        fgn = w.real[..., :M] * h ** spec.H
        out[:, 1:, :] = np.swapaxes(np.cumsum(fgn, axis=-1), 1, 2)
    return _finish(out, spec.T, n_paths)


def sample_bm(d2, T, M, seed, n_paths=None, first_path=0, stream_id=_rng.BM):
    """Standard ``d2``-dimensional Brownian skeleton from its own stream."""
    n = _batch(n_paths)
    z = _rng.normals(seed, stream_id, n, (M, d2), first_path)
    out = np.zeros((n, M + 1, d2))
    out[:, 1:, :] = np.cumsum(np.sqrt(T / M) * z, axis=1)
    return _finish(out, T, n_paths)


def sample_fbm_volterra(spec, bm):
    """``B^H_{t_i} = sum_j K_H(t_i, .) dB_j`` over cells ``j < i``.

    The regular factor ``phi`` is taken at the cell midpoint and the singular
    factor ``s^(1/2-H)`` by its root-mean-square over the cell, so the
    variance of each term is integrated exactly in the singular part.
    """
    if bm.M != spec.M or not np.isclose(bm.T, spec.T):
        raise ValueError("grid mismatch between spec and BM increments")
    if spec.H < 0.5:
        raise ValueError("volterra sampler needs H >= 1/2")
    dB = np.diff(bm.values, axis=-2)
    A = volterra_matrix(spec.H, spec.T, spec.M)
    out = np.zeros(bm.values.shape)
    out[..., 1:, :] = A @ dB
    return GridPath(bm.T, out)


@lru_cache(maxsize=4)
def volterra_matrix(H, T, M):
    """Lower-triangular ``A[i-1, j]`` mapping BM increments of cell ``j`` to ``B^H_{t_i}``."""
    if H == 0.5:
        A = np.tril(np.ones((M, M)))
    else:
        h = T / M
        phi = phi_table(H, M, 0.5) * h ** (2 * H - 1)
        p = 1.0 - 2.0 * H
        edges = np.arange(M + 1, dtype=float) * h
        cell = (edges[1:] ** (p + 1) - edges[:-1] ** (p + 1)) / (p + 1)
        rms = np.sqrt(cell / h)
        A = phi[1:, :M] * rms[None, :]
    A.setflags(write=False)
    return A


# ------------------------------------------------------------- the kernel

def _jacobi01(n, left, right):
    """Nodes/weights on [0,1] for the weight ``x^left (1-x)^right``."""
    with np.errstate(invalid="ignore"):  # harmless 0/0 in scipy when left + right = -1
        x, w = roots_jacobi(n, right, left)
    return 0.5 * (x + 1.0), w * 0.5 ** (1.0 + left + right)


def _legendre01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def volterra_kernel(t, s, H):
    """``K_H(t, s)`` for ``0 < s < t`` via the integral representation."""
    if not 0 < s < t:
        raise ValueError(f"need 0 < s < t, got s={s}, t={t}")
    if H == 0.5:
        return 1.0
    if not 0.5 < H < 1:
        raise ValueError(f"kernel representation needs 1/2 <= H < 1, got {H}")
    return s ** (0.5 - H) * _phi_scalar(t, s, H)


def _phi_scalar(t, s, H):
    a, b = H - 0.5, H - 1.5
    # first piece [s, s + L]: Jacobi weight for (r - s)^b, r^a smooth
    L = min(t - s, s)
    x, w = _jacobi01(_NQ, b, 0.0)
    total = L ** (b + 1) * np.sum(w * (s + L * x) ** a)
    # remaining [s + L, t] split geometrically in r
    lo = s + L
    xg, wg = _legendre01(16)
    while lo < t * (1 - 1e-15):
        hi = min(2 * lo, t)
        r = lo + (hi - lo) * xg
        total += (hi - lo) * np.sum(wg * r ** a * (r - s) ** b)
        lo = hi
    return _phi_const(H) * total


@lru_cache(maxsize=6)
def phi_table(H, M, offset=0.0):
    """``Phi[i, j] = phi(i, j + offset)`` on the unit-step grid (0 if ``i <= j + offset``).

    Built by accumulating cell integrals along each column: Gauss-Jacobi on
    the cell touching the singularity, Gauss-Legendre elsewhere, and the
    closed form ``C t^(2H-1) / (2H-1)`` on the column ``s = 0``.
    """
    if not 0.5 < H < 1:
        raise ValueError(f"phi table needs 1/2 < H < 1, got {H}")
    a, b = H - 0.5, H - 1.5
    C = _phi_const(H)
    out = np.zeros((M + 1, M + 1))
    s = np.arange(M + 1) + offset
    xj, wj = _jacobi01(_NQ, b, 0.0)
    xg, wg = _legendre01(_NQ)
    acc = np.zeros(M + 1)
    for lag in range(1, M + 1):
        i = np.arange(lag, M + 1)
        j = i - lag
        sj = s[j]
        if lag == 1:
            L = i - sj  # first (possibly partial) cell [s, i]
            r = sj[:, None] + L[:, None] * xj[None, :]
            with np.errstate(divide="ignore"):
                val = L ** (b + 1) * np.sum(wj * r ** a, axis=1)
            if offset == 0:
                val[0] = 0.0  # column 0 handled in closed form
            acc[j] = val
        else:
            r = (i - 1)[:, None] + xg[None, :]
            acc[j] += np.sum(wg * r ** a * (r - sj[:, None]) ** b, axis=1)
        out[i, j] = acc[j]
    out *= C
    if offset == 0:
        out[1:, 0] = C * np.arange(1, M + 1) ** (2 * H - 1) / (2 * H - 1)
    out.setflags(write=False)
    return out


def _hat_moments(p, M, h):
    """``omega_j = int s^p psi_j(s) ds`` for the hat functions of the grid."""
    a, b = lag_weights(p, M, h)
    om = np.zeros(M + 1)
    om[1:] += b[1:]
    om[:-1] += a[1:]
    return om


def kernel_inner(H, T, M, i, k):
    """``int_0^{t_i ^ t_k} K_H(t_i, r) K_H(t_k, r) dr`` for grid indices ``i, k``.

    The product ``phi(t_i, .) phi(t_k, .)`` is interpolated linearly between
    nodes and integrated exactly against the weight ``r^(1-2H)``.
    """
    h = T / M
    if H == 0.5:
        return min(i, k) * h
    phi = phi_table(H, M, 0.0) * h ** (2 * H - 1)
    om = _hat_moments(1.0 - 2.0 * H, M, h)
    return float(np.sum(om * phi[i] * phi[k]))


def kernel_norm_sq(H, T, M):
    """``int_0^T K_H(T, s)^2 ds``; equals ``T^2H`` in exact arithmetic."""
    return kernel_inner(H, T, M, M, M)


def kernel_column(H, T, M):
    """Nodal values of ``s -> K_H(T, s)`` suitable as a density on the grid.

    The value at ``s = 0`` (where the kernel is infinite) is replaced by the
    hat-weighted mean of the kernel over the first cell.
    """
    h = T / M
    phi = phi_table(H, M, 0.0)[M] * h ** (2 * H - 1)
    s = np.arange(M + 1) * h
    col = np.zeros(M + 1)
    col[1:] = s[1:] ** (0.5 - H) * phi[1:]
    # hat mean over [0, h]: phi ~ phi_0 there, s^(1/2-H) weight exact
    p = 0.5 - H
    col[0] = phi[0] * 2.0 * h ** p * (1.0 / (p + 1) - 1.0 / (p + 2))
    return col


# ---------------------------------------------------- Cameron-Martin map
#
# Two discretisations of the density are supported.
#   basis="nodal":    dot_u is linear between nodes; L2 norm by the trapezoid rule.
#   basis="weighted": dot_u(s) = s^(1/2-H) v(s) with v linear between nodes; the
#                     norm int s^(1-2H) v^2 uses exact hat moments of the weight.
# The weighted basis carries the s^(1/2-H) singularity of the kernel itself, so
# minimum-norm problems converge much faster in M when H is close to 1.

BASES = ("nodal", "weighted")


def _left_power(H, basis):
    return 0.5 - H if basis == "nodal" else 1.0 - 2.0 * H


@lru_cache(maxsize=4)
def _deriv_table(H, M, basis="nodal"):
    """``G[i, j] = int_0^i (i-x)^(H-3/2) x^q psi_j(x) dx`` on the unit grid.

    ``q = 1/2 - H`` (nodal) or ``1 - 2H`` (weighted).
    """
    q, b = _left_power(H, basis), H - 1.5
    G = np.zeros((M + 1, M + 1))
    xg, wg = _legendre01(_NQ)
    xr, wr = _jacobi01(_NQ, 0.0, b)   # (1-x)^b: singular right end
    xl, wl = _jacobi01(_NQ, q, 0.0)   # x^q: singular left end
    xb, wb = _jacobi01(_NQ, q, b)     # both, the single cell [0, 1] for i = 1
    for lag in range(1, M + 1):
        m = np.arange(0, M + 1 - lag)
        i = m + lag
        if lag == 1:
            x = m[:, None] + xr
            w = wr * x ** q
            x[0], w[0] = xb, wb
        else:
            x = m[:, None] + xg
            w = wg * (i[:, None] - x) ** b * x ** q
            x[0], w[0] = xl, wl * (lag - xl) ** b
        frac = x - m[:, None]
        G[i, m] += np.sum(w * (1.0 - frac), axis=1)
        G[i, m + 1] += np.sum(w * frac, axis=1)
    G.setflags(write=False)
    return G


def norm_weights(H, T, M, basis="nodal"):
    """Diagonal weights ``W`` with ``||dot_u||^2 ~ sum_j W_j |c_j|^2`` for coefficients ``c``."""
    h = T / M
    if basis == "nodal" or H == 0.5:
        w = np.full(M + 1, h)
        w[[0, -1]] = 0.5 * h
        return w
    return _hat_moments(1.0 - 2.0 * H, M, h)


@lru_cache(maxsize=4)
def cm_matrix(H, T, M, basis="nodal"):
    """Matrix ``Kmat`` with ``u(t_i) = sum_j Kmat[i, j] c_j`` for density coefficients ``c``."""
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}")
    h = T / M
    if H == 0.5:
        K = np.tril(np.full((M + 1, M + 1), h))
        K[:, 0] = 0.5 * h
        K[np.arange(M + 1), np.arange(M + 1)] = 0.5 * h
        K[0, 0] = 0.0
    elif 0.5 < H < 1:
        phi = phi_table(H, M, 0.0) * h ** (2 * H - 1)
        K = phi * _hat_moments(_left_power(H, basis), M, h)[None, :]
    else:
        raise ValueError(f"Cameron-Martin map needs 1/2 <= H < 1, got {H}")
    K.setflags(write=False)
    return K


def _nodal_density(c, H, T, basis):
    """Finite nodal values of ``dot_u`` from coefficients (hat mean at ``s = 0``)."""
    if basis == "nodal" or H == 0.5:
        return c
    M = c.shape[0] - 1
    h = T / M
    p = 0.5 - H
    s = np.arange(M + 1)[:, None] * h
    out = np.empty_like(c)
    out[1:] = s[1:] ** p * c[1:]
    out[0] = c[0] * 2.0 * h ** p * (1.0 / (p + 1) - 1.0 / (p + 2))
    return out


def cameron_martin_apply(coeffs, H, T, basis="nodal"):
    """Build the :class:`Control` for density coefficients on the grid.

    With ``basis="nodal"`` the coefficients are the nodal values of ``dot_u``;
    with ``basis="weighted"`` they are the nodal values of ``v`` in
    ``dot_u(s) = s^(1/2-H) v(s)``.  In both cases
    ``u(t_i) = int_0^{t_i} K_H(t_i, s) dot_u(s) ds`` integrates the singular
    power of ``s`` exactly against the linear interpolant, and
    ``u'(t) = C_H t^(H-1/2) int_0^t (t-s)^(H-3/2) s^(1/2-H) dot_u(s) ds`` uses
    product integration of the same interpolant.
    """
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}")
    c = np.array(coeffs, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    if not np.all(np.isfinite(c)):
        raise ValueError("density contains non-finite values")
    M = c.shape[0] - 1
    if M < 1:
        raise ValueError("degenerate grid: need at least one step (M >= 1)")
    h = T / M
    if H == 0.5:
        u = cumulative_trapezoid(c, dx=h, axis=0, initial=0.0)
        up = c.copy()
    else:
        u = cm_matrix(H, T, M, basis) @ c
        t = np.arange(M + 1) * h
        scale = _phi_const(H) * t[:, None] ** (H - 0.5)
        if basis == "weighted":
            scale = scale * h ** (0.5 - H)  # x^(1-2H) table vs s^(1/2-H) s^(1/2-H)
        up = scale * (_deriv_table(H, M, basis) @ c)
    norm = float(norm_weights(H, T, M, basis) @ np.sum(c ** 2, axis=1))
    c.setflags(write=False)
    du = _nodal_density(c, H, T, basis)
    du.setflags(write=False)
    return Control(du, GridPath(T, u), GridPath(T, up), norm, H, c, basis)


def fbm_cov_matrix(H, times):
    t = np.asarray(times, dtype=float)
    return fbm_covariance(t[:, None], t[None, :], H)
