"""Grid paths, fractional Sobolev-type norms, Weyl derivatives and Young integrals.

All singular integrals of the form ``int |g(t) - g(s)| (t - s)^p ds`` are
evaluated by product integration: the path increment is interpolated linearly
in the lag variable ``r = t - s`` between grid points, and the power weight
``r^p`` is integrated exactly against each linear piece.  This is exact for
paths that are affine on the grid and first-order accurate otherwise.

Sup norms are discrete: they range over grid points only.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import beta, gamma


@dataclass(frozen=True)
class GridPath:
    """A path sampled on the uniform grid ``t_i = i T / M``, ``i = 0..M``.

    ``values`` has shape ``(..., M + 1, d)``; leading axes index independent
    paths of a Monte Carlo batch.  A 1-D array is read as a scalar path.
    The array is copied and frozen on construction.
    """

    T: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim < 2 or v.shape[-2] < 2:
            raise ValueError("degenerate grid: need at least one step (M >= 1)")
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got T={self.T}")
        if not np.all(np.isfinite(v)):
            raise ValueError("path contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "values", v)

    @property
    def M(self):
        return self.values.shape[-2] - 1

    @property
    def d(self):
        return self.values.shape[-1]

    @property
    def h(self):
        return self.T / self.M

    @property
    def batch_shape(self):
        return self.values.shape[:-2]

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.M + 1)

    @classmethod
    def from_function(cls, func, T, M):
        """Sample ``func(t)`` (vectorised over ``t``) on the grid."""
        t = np.linspace(0.0, T, M + 1)
        return cls(T, np.asarray(func(t), dtype=float).reshape(M + 1, -1))

    @classmethod
    def zeros(cls, T, M, d=1):
        return cls(T, np.zeros((M + 1, d)))

    def __getitem__(self, idx):
        """Select paths from a batch (``path[k]``)."""
        return GridPath(self.T, self.values[idx])

    def with_values(self, values):
        return GridPath(self.T, values)

    def window(self, i, j):
        """Restriction to ``[t_i, t_j]`` re-based to start at time 0."""
        if not 0 <= i < j <= self.M:
            raise ValueError(f"invalid window [{i}, {j}] for M={self.M}")
        return GridPath((j - i) * self.h, self.values[..., i:j + 1, :])

    def coarsen(self, factor):
        """Subsample every ``factor``-th grid point (same horizon)."""
        if self.M % factor:
            raise ValueError(f"M={self.M} not divisible by {factor}")
        return GridPath(self.T, self.values[..., ::factor, :])

    def index_of(self, t):
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        x = t / self.h
        i = int(round(x))
        if abs(x - i) > 1e-9 * max(1.0, abs(x)) or not 0 <= i <= self.M:
            raise ValueError(f"time {t} is not a point of the grid (h={self.h})")
        return i

    def same_grid(self, other):
        return self.M == other.M and np.isclose(self.T, other.T, rtol=1e-12)

    def to_csv(self, path):
        """Write ``t,comp_0,...`` rows with full double precision (single path)."""
        if self.values.ndim != 2:
            raise ValueError("CSV export needs a single path, not a batch")
        header = ",".join(["t"] + [f"comp_{c}" for c in range(self.d)])
        data = np.column_stack([self.times, self.values])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[-1, 0], data[:, 1:])


def _check_single(path):
    if path.values.ndim != 2:
        raise ValueError("expected a single path, got a batch")
    return path.values


def _check_alpha(alpha):
    if not 0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")


def _powdiff(k, q):
    """``k**q - (k-1)**q`` for integer arrays ``k >= 2`` without cancellation."""
    k = np.asarray(k, dtype=float)
    return -(k ** q) * np.expm1(q * np.log1p(-1.0 / k))


def lag_weights(p, n, h):
    """Product-integration weights for ``int_0^{n h} D(r) r^p dr``.

    ``D`` is linear on each cell ``[(k-1)h, kh]``; the cell contributes
    ``A[k] * D_{k-1} + B[k] * D_k``.  Index 0 is unused.  ``A[1]`` is set to 0
    when ``p <= -1`` because it always multiplies ``D_0 = 0`` in that case.
    """
    k = np.arange(2, n + 1)
    i0 = np.empty(n + 1)
    i1 = np.empty(n + 1)
    i0[2:] = _powdiff(k, p + 1) / (p + 1)
    i1[2:] = _powdiff(k, p + 2) / (p + 2)
    a = np.zeros(n + 1)
    b = np.zeros(n + 1)
    a[2:] = k * i0[2:] - i1[2:]
    b[2:] = i1[2:] - (k - 1) * i0[2:]
    if n >= 1:
        b[1] = 1.0 / (p + 2)
        a[1] = 1.0 / (p + 1) - 1.0 / (p + 2) if p > -1 else 0.0
    scale = h ** (p + 1)
    return a * scale, b * scale


def _left_singular_sums(v, p, h, absolute):
    """``S_i ~ int_0^{t_i} D_i(s) (t_i - s)^p ds`` at every node.

    ``D_i(s) = |v_i - v(s)|`` (Euclidean) if ``absolute`` else ``v_i - v(s)``.
    Returns shape ``(M+1,)`` or ``(M+1, d)``.
    """
    M = v.shape[0] - 1
    a, b = lag_weights(p, M, h)
    shape = (M + 1,) if absolute else v.shape
    out = np.zeros(shape)
    prev = np.zeros(shape)  # D_{k-1}(i) for i >= k-1
    for k in range(1, M + 1):
        diff = v[k:] - v[:-k]
        cur = np.linalg.norm(diff, axis=1) if absolute else diff
        out[k:] += a[k] * prev[k:] + b[k] * cur
        prev = np.zeros(shape)
        prev[k:] = cur
    return out


def _right_lags(v, p, h, absolute):
    """Yield ``(k, inc_k, F_k)`` for lags ``k = 1..M``.

    ``inc_k[j] = v_{j+k} - v_j`` and ``F_k[j] ~ int_{t_j}^{t_j + k h} D(y) (y - t_j)^p dy``
    with ``D(y) = |v(y) - v_j|`` or ``v(y) - v_j``; arrays are indexed by the
    left endpoint ``j = 0..M-k``.
    """
    M = v.shape[0] - 1
    a, b = lag_weights(p, M, h)
    F = np.zeros(v.shape[0]) if absolute else np.zeros(v.shape)
    prev = np.zeros_like(F)
    for k in range(1, M + 1):
        inc = v[k:] - v[:-k]
        cur = np.linalg.norm(inc, axis=1) if absolute else inc
        n = M + 1 - k
        F = F[:n] + a[k] * prev[:n] + b[k] * cur
        prev = cur
        yield k, inc, F


def holder_norm(g, eta):
    """``sup|g| + max_{s<t} |g(t) - g(s)| / (t - s)^eta`` over grid pairs."""
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    v = _check_single(g)
    sup = np.linalg.norm(v, axis=1).max()
    best = 0.0
    for k in range(1, g.M + 1):
        inc = np.linalg.norm(v[k:] - v[:-k], axis=1).max()
        best = max(best, inc / (k * g.h) ** eta)
    return float(sup + best)


def w_alpha_inf_norm(g, alpha):
    """Discrete ``sup_t [ |g(t)| + int_0^t |g(t)-g(s)| / (t-s)^(alpha+1) ds ]``."""
    _check_alpha(alpha)
    v = _check_single(g)
    inner = _left_singular_sums(v, -alpha - 1.0, g.h, absolute=True)
    return float(np.max(np.linalg.norm(v, axis=1) + inner))


def w_alpha_one_norm(g, alpha, inner_weight=1.0):
    """Discrete ``int |g(s)| s^-alpha ds + c int int |g(s)-g(y)| (s-y)^-(alpha+1) dy ds``.

    ``inner_weight = 1`` gives the ``W_0^{alpha,1}`` norm; ``inner_weight =
    alpha`` gives the right-hand side integral of the windowed Young bound.
    """
    _check_alpha(alpha)
    v = _check_single(g)
    M, h = g.M, g.h
    mod = np.linalg.norm(v, axis=1)
    a, b = lag_weights(-alpha, M, h)
    first = np.sum(a[1:] * mod[:-1] + b[1:] * mod[1:])
    inner = _left_singular_sums(v, -alpha - 1.0, h, absolute=True)
    second = h * (inner[1:-1].sum() + 0.5 * inner[-1])
    return float(first + inner_weight * second)


def w_one_minus_alpha_norm(h_path, alpha):
    """Discrete ``sup_{s<t} ( |h(t)-h(s)|/(t-s)^(1-alpha) + int_s^t |h(y)-h(s)|/(y-s)^(2-alpha) dy )``."""
    _check_alpha(alpha)
    v = _check_single(h_path)
    step = h_path.h
    best = 0.0
    for k, inc, F in _right_lags(v, alpha - 2.0, step, absolute=True):
        term = np.linalg.norm(inc, axis=1) / (k * step) ** (1.0 - alpha) + F
        best = max(best, term.max())
    return float(best)


def weyl_left(g, alpha, a, t):
    """Left Weyl derivative ``D^alpha_{a+} g (t)`` at a grid time ``t > a``."""
    _check_alpha(alpha)
    v = _check_single(g)
    ia, it = g.index_of(a), g.index_of(t)
    if it <= ia:
        raise ValueError(f"need a < t, got a={a}, t={t}")
    n = it - ia
    aw, bw = lag_weights(-alpha - 1.0, n, g.h)
    diffs = v[it] - v[it - np.arange(n + 1)]  # D_k, k = 0..n
    integral = (aw[1:, None] * diffs[:-1] + bw[1:, None] * diffs[1:]).sum(axis=0)
    return (v[it] / (n * g.h) ** alpha + alpha * integral) / gamma(1.0 - alpha)


def weyl_right(h_path, alpha, s, b):
    """Right Weyl derivative ``D^{1-alpha}_{b-} h_{b-} (s)`` with the phase dropped.

    Returns ``(1/Gamma(alpha)) [ (h(s)-h(b))/(b-s)^(1-alpha)
    + (1-alpha) int_s^b (h(s)-h(r))/(r-s)^(2-alpha) dr ]``.
    """
    _check_alpha(alpha)
    v = _check_single(h_path)
    i_s, i_b = h_path.index_of(s), h_path.index_of(b)
    if i_b <= i_s:
        raise ValueError(f"need s < b, got s={s}, b={b}")
    n = i_b - i_s
    aw, bw = lag_weights(alpha - 2.0, n, h_path.h)
    diffs = v[i_s] - v[i_s + np.arange(n + 1)]
    integral = (aw[1:, None] * diffs[:-1] + bw[1:, None] * diffs[1:]).sum(axis=0)
    first = (v[i_s] - v[i_b]) / (n * h_path.h) ** (1.0 - alpha)
    return (first + (1.0 - alpha) * integral) / gamma(alpha)


def _right_weyl_all(v, alpha, step):
    """Yield ``(k, Dr_k)`` with ``Dr_k[j] = weyl_right(h, alpha, t_j, t_j + k h)``."""
    c = 1.0 / gamma(alpha)
    for k, inc, F in _right_lags(v, alpha - 2.0, step, absolute=False):
        # D(y) = v(y) - v_j, the Weyl integrand uses v_j - v(y)
        yield k, c * (-inc / (k * step) ** (1.0 - alpha) - (1.0 - alpha) * F)


def lambda_alpha(h_path, alpha):
    """``(1/Gamma(1-alpha)) max_{s<t} |D^{1-alpha}_{t-} h_{t-}(s)|`` over grid pairs."""
    _check_alpha(alpha)
    v = _check_single(h_path)
    best = 0.0
    for _, dr in _right_weyl_all(v, alpha, h_path.h):
        best = max(best, np.linalg.norm(dr, axis=1).max())
    return float(best / gamma(1.0 - alpha))


def estimate_holder_exponent(path, lags=(1, 2, 4, 8, 16)):
    """Regression estimate of the Hölder exponent from increment second moments."""
    v = _check_single(path)
    lags = [k for k in lags if k < path.M]
    if len(lags) < 2:
        return np.nan
    ms = [np.mean(np.sum((v[k:] - v[:-k]) ** 2, axis=1)) for k in lags]
    if min(ms) <= 0:
        return 1.0
    slope = np.polyfit(np.log(np.array(lags) * path.h), np.log(ms), 1)[0]
    return 0.5 * slope


def _corner_moments(alpha):
    """Integrals over ``u in [0,1]`` of the two corner bumps against linear data.

    ``phi1(u) = u^(1-alpha) - u`` and ``phi2(u) = (1-u)^alpha - (1-u)`` are the
    parts of the left and right Weyl derivatives of a piecewise-linear path that
    a linear interpolant between nodes misses.
    """
    m1 = 1.0 / (2.0 - alpha) - 0.5
    mu1 = 1.0 / (3.0 - alpha) - 1.0 / 3.0
    m2 = 1.0 / (1.0 + alpha) - 0.5
    mv2 = 1.0 / (2.0 + alpha) - 1.0 / 3.0
    m12 = beta(2.0 - alpha, 1.0 + alpha) - beta(2.0 - alpha, 2.0) - beta(2.0, 1.0 + alpha) + 1.0 / 6.0
    return m1 - mu1, mu1, mv2, m2 - mv2, m12


def young_integral(g, h_path, alpha):
    """Running Young integral ``t -> int_0^t g dh`` via the Weyl pairing formula.

    ``int_0^b g dh = - int_0^b D^alpha_{0+} g_{0+}(x) D^{1-alpha}_{b-} h_{b-}(x) dx
    + g(0) (h(b) - h(0))`` with both Weyl derivatives real-valued (the two
    complex phases multiply to -1).

    Both derivatives are exact at the nodes for the piecewise-linear interpolants.
    Inside a cell each one is a linear part plus a corner term
    ``c (x - t_j)^(1-alpha)`` (left) or ``c (t_{j+1} - x)^alpha`` (right) whose
    coefficient is the slope jump at that node, so the outer integral is done
    cell by cell in closed form.

    ``g`` may be scalar (broadcast) or have the dimension of ``h``; the result
    holds the componentwise integrals ``int g_c dh_c``.
    """
    if not 0 < alpha < 0.5:
        raise ValueError(f"exponent window empty: alpha={alpha} not in (0, 1/2)")
    if not g.same_grid(h_path):
        raise ValueError("incompatible grids")
    gv, hv = _check_single(g), _check_single(h_path)
    if gv.shape[1] not in (1, hv.shape[1]):
        raise ValueError(f"dimension mismatch: g has {gv.shape[1]}, h has {hv.shape[1]}")
    _warn_exponents(g, h_path, alpha)
    step, M = g.h, g.M
    dl = _left_singular_sums(gv, -alpha - 1.0, step, absolute=False)
    t = g.times
    dl[1:] = (alpha * dl[1:] + (gv[1:] - gv[0]) / t[1:, None] ** alpha) / gamma(1.0 - alpha)
    dl[0] = 0.0
    gs = np.diff(gv, axis=0) / step
    hs = np.diff(hv, axis=0) / step
    c1 = np.diff(gs, axis=0, prepend=0.0) * step ** (1.0 - alpha) / gamma(2.0 - alpha)
    k1, q1, k2, q2, k12 = _corner_moments(alpha)
    a0, a1 = dl[:-1], dl[1:]
    # cell integral = r0 * P + r1 * Q + c2 * S with r0, r1 the right derivative
    # at the cell ends and c2 its corner coefficient; only r0, r1, c2 depend on b
    P = step * (a0 / 3.0 + a1 / 6.0 + k1 * c1)
    Q = step * (a0 / 6.0 + a1 / 3.0 + q1 * c1)
    S = -step * (k2 * a0 + q2 * a1 + k12 * c1) * step ** alpha / gamma(1.0 + alpha)
    last = S * hs  # cell ending at b: no slope beyond b
    inner = S[:-1] * (hs[:-1] - hs[1:])
    width = np.broadcast_shapes(gv.shape, hv.shape)[1]
    out = np.zeros((M + 1, width))
    right = np.zeros((M, width))  # D^{1-alpha}_{b-} h at node j+1 for b = j+k
    for k, dr in _right_weyl_all(hv, alpha, step):
        n = M + 1 - k  # cells j = 0..n-1 end at b = j + k
        corner = last if k == 1 else inner[:n]
        out[k:] -= dr[:n] * P[:n] + right[:n] * Q[:n] + corner
        right = dr[1:]
    out += gv[0] * (hv - hv[0])
    return GridPath(g.T, out)


def _warn_exponents(g, h_path, alpha):
    eg, eh = estimate_holder_exponent(g), estimate_holder_exponent(h_path)
    if eh <= 1.0 - alpha or eg <= alpha:
        warnings.warn(
            f"estimated Hölder exponents (g: {eg:.3f}, h: {eh:.3f}) may violate "
            f"g > alpha={alpha}, h > 1 - alpha",
            RuntimeWarning,
            stacklevel=3,
        )


def riemann_stieltjes_sum(g, h_path):
    """Running left-point sums ``sum_i g(t_i) (h(t_{i+1}) - h(t_i))``."""
    if not g.same_grid(h_path):
        raise ValueError("grid mismatch")
    gv, hv = g.values, h_path.values
    incr = gv[..., :-1, :] * np.diff(hv, axis=-2)
    out = np.zeros(np.broadcast_shapes(gv.shape, hv.shape))
    out[..., 1:, :] = np.cumsum(incr, axis=-2)
    return GridPath(g.T, out)
