"""Skeleton equations, endpoint rate functions and moderate-deviation diagnostics.

The skeleton ``dz = A(t) z dt + S(t) du_t``, ``z(0) = 0`` with
``A(t) = Df(x_t)`` and ``S(t) = sigma(x_t)`` along a deterministic base path
is linear in the control, so the endpoint map ``dot_u -> z(T)`` is a matrix.
The endpoint rate function is the minimum-norm problem

    I(target) = min 1/2 ||dot_u||^2  subject to  R dot_u = target,

solved in closed form through the Gram matrix ``R W^-1 R^T``.
"""

import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr, ndtr

from . import _mc
from .errors import UnreachableTargetError
from .fbm import Control, FbmSpec, cameron_martin_apply, cm_matrix, norm_weights, sample_fbm
from .fracpath import GridPath
from .sde import deviation_path, solve_ode, solve_single_scale


@dataclass(frozen=True)
class SkeletonProblem:
    """Linear skeleton data along ``base_path`` (shape ``(M+1, m)``).

    ``jacobian(x)`` maps a batch ``(K, m)`` to ``(K, m, m)`` and
    ``diffusion(x)`` to ``(K, m, d1)``.  ``basis`` selects the density
    representation used by :func:`rate_function_endpoint`.
    """

    base_path: GridPath
    jacobian: Callable
    diffusion: Callable
    H: float = 0.75
    alpha: float = 0.3
    d1: int = 1
    basis: str = "weighted"

    @property
    def T(self):
        return self.base_path.T

    @property
    def M(self):
        return self.base_path.M

    @property
    def m(self):
        return self.base_path.d

    def coefficients(self):
        """Cell-midpoint ``A`` ``(M, m, m)`` and ``S`` ``(M, m, d1)``, averaged from the nodes."""
        x = self.base_path.values
        K, m = x.shape
        A = np.asarray(self.jacobian(x), float).reshape(K, m, m)
        S = np.asarray(self.diffusion(x), float)
        S = S.reshape(K, m, self.d1) if S.size == K * m * self.d1 else np.broadcast_to(S, (K, m, self.d1))
        return 0.5 * (A[1:] + A[:-1]), 0.5 * (S[1:] + S[:-1])


class _Flow(NamedTuple):
    full: np.ndarray   # expm(h A_i)
    half: np.ndarray   # expm(h A_i / 2)
    S: np.ndarray


def _flow(problem):
    A, S = problem.coefficients()
    h = problem.base_path.h
    if not np.any(A):
        eye = np.broadcast_to(np.eye(problem.m), A.shape)
        return _Flow(eye, eye, S)
    full = np.array([linalg.expm(h * a) for a in A])
    half = np.array([linalg.expm(0.5 * h * a) for a in A])
    return _Flow(full, half, S)


def _u_of(control):
    if isinstance(control, tuple):  # (u, v): the fast control never enters
        control = control[0]
    return control


def solve_skeleton(problem, control):
    """Exponential-midpoint integration of the skeleton.

    ``z_{i+1} = e^{h A_i} z_i + e^{h A_i / 2} S_i (u(t_{i+1}) - u(t_i))``: exact
    for constant coefficients when ``u`` is linear on each cell.  ``control``
    may be a :class:`Control` or a pair ``(u, v)``; ``v`` is ignored.
    """
    u = _u_of(control)
    if u.M != problem.M or not np.isclose(u.T, problem.T):
        raise ValueError("grid mismatch between control and skeleton problem")
    fl = _flow(problem)
    du = np.diff(u.u.values, axis=0)
    z = np.zeros((problem.M + 1, problem.m))
    for i in range(problem.M):
        z[i + 1] = fl.full[i] @ z[i] + fl.half[i] @ (fl.S[i] @ du[i])
    return GridPath(problem.T, z)


def build_response_matrix(problem, basis=None):
    """Matrix ``R`` of shape ``(m, (M+1) d1)`` with ``z(T) = R c`` for density coefficients ``c``.

    Coefficients are flattened node-major (``c[j * d1 + k]``).  Built by
    composing the cell propagators back from ``T``, which equals applying
    :func:`solve_skeleton` to every unit coefficient vector.
    """
    basis = problem.basis if basis is None else basis
    fl = _flow(problem)
    M, m, d1 = problem.M, problem.m, problem.d1
    Q = np.empty((M, m, d1))
    P = np.eye(m)  # propagator from t_{i+1} to T
    for i in range(M - 1, -1, -1):
        Q[i] = P @ fl.half[i] @ fl.S[i]
        P = P @ fl.full[i]
    dK = np.diff(cm_matrix(problem.H, problem.T, M, basis), axis=0)  # (M, M+1)
    return np.einsum("imk,ij->mjk", Q, dK).reshape(m, (M + 1) * d1)


@dataclass
class RateFunctionSolution:
    optimal_dot_u: np.ndarray
    cost: float
    achieved_path: GridPath
    response_matrix: np.ndarray
    control: Optional[Control] = None
    target: np.ndarray = field(default_factory=lambda: np.zeros(1))


def _weights(problem, basis):
    return np.repeat(norm_weights(problem.H, problem.T, problem.M, basis), problem.d1)


def rate_function_endpoint(problem, target, rcond=1e-10, basis=None, R=None):
    """Minimum-norm control steering the skeleton to ``z(T) = target``.

    Returns a :class:`RateFunctionSolution`; ``optimal_dot_u`` holds the
    coefficients in the problem's basis (nodal density values of the control
    are in ``solution.control.dot_u``).
    """
    basis = problem.basis if basis is None else basis
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if target.shape != (problem.m,):
        raise ValueError(f"target must have shape ({problem.m},)")
    R = build_response_matrix(problem, basis) if R is None else R
    w = _weights(problem, basis)
    G = (R / w) @ R.T
    lam_vals, vecs = linalg.eigh(G)
    top = max(lam_vals.max(), 0.0)
    keep = lam_vals > rcond * top if top > 0 else np.zeros_like(lam_vals, bool)
    if not np.any(target):
        c = np.zeros(R.shape[1])
    else:
        if keep.sum() < problem.m:
            resid = vecs[:, ~keep].T @ target
            if np.linalg.norm(resid) > 1e-12 * np.linalg.norm(target) or not keep.any():
                raise UnreachableTargetError(
                    f"unreachable target: Gram matrix has rank {int(keep.sum())} < {problem.m}")
        lam = vecs[:, keep] @ ((vecs[:, keep].T @ target) / lam_vals[keep])
        c = (R.T @ lam) / w
    cost = 0.5 * float(c @ (w * c))
    coeffs = c.reshape(problem.M + 1, problem.d1)
    ctrl = cameron_martin_apply(coeffs, problem.H, problem.T, basis)
    path = solve_skeleton(problem, ctrl)
    return RateFunctionSolution(coeffs, cost, path, R, ctrl, target)


def rate_function_exit_level(problem, delta, **kw):
    """``min(I(+delta), I(-delta))`` for a scalar slow variable."""
    if problem.m != 1:
        raise ValueError("exit level needs a scalar slow variable")
    if delta == 0:
        return 0.0
    basis = kw.pop("basis", None)
    R = build_response_matrix(problem, basis)
    return min(rate_function_endpoint(problem, [s * delta], basis=basis, R=R, **kw).cost
               for s in (1.0, -1.0))


def two_scale_skeleton_v_independence(problem, u, v):
    """Whether the skeleton output for ``(u, v)`` equals the one for ``(u, 0)`` bit for bit."""
    a = solve_skeleton(problem, (u, v)).values
    b = solve_skeleton(problem, (u, None)).values
    return bool(np.array_equal(a, b))


# ------------------------------------------------------------- problem setup

def _numeric_jacobian(f, m, eps=1e-6):
    def jac(x):
        x = np.asarray(x, float).reshape(-1, m)
        out = np.empty((x.shape[0], m, m))
        for k in range(m):
            e = np.zeros(m)
            e[k] = eps
            out[:, :, k] = (np.asarray(f(x + e)).reshape(-1, m)
                            - np.asarray(f(x - e)).reshape(-1, m)) / (2 * eps)
        return out
    return jac


def skeleton_from_system(spec, T=1.0, M=1024, H=0.75, alpha=0.3, x0=None,
                         drift=None, jacobian=None, basis="weighted"):
    """Skeleton along the deterministic limit of a system.

    Single scale: base path solves ``dx = f dt``, coefficients ``Df``, ``sigma``.
    Two scale: pass the averaged ``drift`` (and optionally its ``jacobian``);
    the diffusion is ``sigma1``.
    """
    f = drift if drift is not None else spec.drift
    base = solve_ode(spec, x0, T, M, drift=f)
    if jacobian is None:
        jacobian = spec.jacobian if (drift is None and spec.jacobian is not None) else \
            _numeric_jacobian(f, spec.m)
    diffusion = spec.sigma if spec.mode == "single_scale" else spec.sigma1
    return SkeletonProblem(base, jacobian, diffusion, H, alpha, spec.d1, basis)


# ----------------------------------------------------------------- reports

COLUMNS = ("epsilon", "h_eps", "b_eps", "quantity", "estimate", "stderr", "exact")


@dataclass
class Report:
    rows: list
    summary: dict

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for r in self.rows:
                fh.write(",".join(_fmt(r.get(c)) for c in COLUMNS) + "\n")

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True, default=_jsonable)

    def column(self, quantity, key="estimate"):
        return np.array([r[key] for r in self.rows if r["quantity"] == quantity], dtype=float)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    v = float(v)
    return "nan" if np.isnan(v) else repr(v)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _row(p, quantity, estimate, stderr=np.nan, exact=np.nan):
    return dict(epsilon=p.epsilon, h_eps=p.h_eps, b_eps=p.b_eps, quantity=quantity,
                estimate=estimate, stderr=stderr, exact=exact)


def _is_pure_noise(spec, probes=np.linspace(-3, 3, 13)):
    """Return the constant noise level ``c`` if ``f == 0`` and ``sigma == c``, else None."""
    if spec.mode != "single_scale" or spec.m != 1 or spec.d1 != 1:
        return None
    x = probes[:, None]
    f = np.asarray(spec.f(x), float).ravel()
    s = np.broadcast_to(np.asarray(spec.sigma(x), float), x.shape).ravel()
    if np.all(f == 0) and np.all(s == s[0]) and s[0] != 0:
        return abs(float(s[0]))
    return None


def _deviation_endpoints(spec, p, n_paths, seed, T, M, H, method, chunk, workers):
    """``z^eps_T`` for ``n_paths`` paths; the limit uses the same Euler grid."""
    fspec = FbmSpec(H, spec.d1, T, M, seed, method)
    xlim = solve_ode(spec, None, T, M, method="euler")

    def run(first, n):
        B = sample_fbm(fspec, n, first)
        x = solve_single_scale(spec, p, B)
        return deviation_path(x, GridPath(T, np.broadcast_to(xlim.values, x.values.shape)),
                              p).values[:, -1, :]

    return np.concatenate(_mc.map_chunks(run, n_paths, chunk, workers))


def limit_variance(spec, T=1.0, M=1024, H=0.75, x0=None):
    """``Var(int_0^T Phi(T, s) sigma(x_s) dB^H_s)`` by the increment double sum.

    ``Phi`` is the propagator of ``dz = Df(x_t) z dt`` along the limit path and
    ``Cov(dB_i, dB_j) = h^2H/2 (|k+1|^2H + |k-1|^2H - 2|k|^2H)``, ``k = i - j``.
    """
    prob = skeleton_from_system(spec, T, M, H, x0=x0)
    fl = _flow(prob)
    m, d1 = prob.m, prob.d1
    g = np.empty((M, m, d1))
    P = np.eye(m)
    for i in range(M - 1, -1, -1):
        g[i] = P @ fl.half[i] @ fl.S[i]
        P = P @ fl.full[i]
    k = np.arange(M, dtype=float)
    h2 = 2 * H
    gam = 0.5 * ((k + 1) ** h2 + np.abs(k - 1) ** h2 - 2 * k ** h2) * (T / M) ** h2
    cov = linalg.toeplitz(gam)
    gf = g.transpose(1, 2, 0)  # (m, d1, M)
    V = np.einsum("akI,IJ,bkJ->ab", gf, cov, gf)
    return float(V[0, 0]) if m == 1 else V


def clt_variance_check(spec, params_chain, n_paths, seed, T=1.0, M=1024, H=0.75,
                       method="cholesky", chunk=200, workers=None):
    """MC estimates of ``h(eps)^2 Var(z^eps_T)`` along an epsilon chain.

    Report rows carry quantity ``h2_var_zT`` with the limit variance from
    :func:`limit_variance` in the ``exact`` column.
    """
    target = limit_variance(spec, T, M, H)
    rows = []
    for p in params_chain:
        z = _deviation_endpoints(spec, p, n_paths, seed, T, M, H, method, chunk, workers)[:, 0]
        y = (p.h_eps * (z - z.mean())) ** 2
        est = float(y.sum() / (n_paths - 1))
        se = float(y.std(ddof=1) / np.sqrt(n_paths))
        rows.append(_row(p, "h2_var_zT", est, se, target))
    summary = dict(limit_variance=target, n_paths=n_paths, seed=seed, T=T, M=M, H=H,
                   estimates=[r["estimate"] for r in rows],
                   epsilons=[r["epsilon"] for r in rows])
    return Report(rows, summary)


def wilson_interval(k, n, z=1.96):
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return centre - half, centre + half


def exact_exit_log_prob(p, delta, T, H, c=1.0):
    """``log P(|z^eps_T| >= delta)`` when ``z^eps_T = c B^H_T / h(eps)``."""
    x = delta * p.h_eps / (c * T ** H)
    return float(np.log(2.0) + log_ndtr(-x))


def empirical_mdp_rate(spec, params_chain, delta, n_paths, seed=0, T=1.0, M=256, H=0.75,
                       method="cholesky", chunk=500, workers=None, rate=None):
    """Table of ``b(eps) log P(|z^eps_T| >= delta)`` along an epsilon chain.

    Quantities per epsilon: ``mc_bylogp`` (plain MC with a delta-method
    standard error, NaN with the note "below MC resolution" when no path
    exits), ``mc_prob`` with Wilson bounds in the summary, and
    ``exact_bylogp`` when the system is ``f = 0``, ``sigma = c``.
    """
    if spec.m != 1:
        raise ValueError("empirical rate needs a scalar slow variable")
    c = _is_pure_noise(spec)
    if rate is None:
        rate = rate_function_exit_level(skeleton_from_system(spec, T, max(M, 256), H), delta)
    rows, notes, wilson = [], {}, {}
    for p in params_chain:
        if c is not None:
            # z^eps_T = c B^H_T / h(eps) exactly: only B^H_T is needed
            z = c * _fbm_endpoint(H, T, n_paths, seed) / p.h_eps
        else:
            z = _deviation_endpoints(spec, p, n_paths, seed, T, M, H, method, chunk, workers)[:, 0]
        k = int(np.sum(np.abs(z) >= delta))
        lo, hi = wilson_interval(k, n_paths)
        wilson[p.epsilon] = (lo, hi)
        exact = p.b_eps * exact_exit_log_prob(p, delta, T, H, c) if c is not None else np.nan
        rows.append(_row(p, "mc_prob", k / n_paths,
                         np.sqrt(max(k, 1) * (n_paths - k)) / n_paths ** 1.5,
                         2 * ndtr(-delta * p.h_eps / (c * T ** H)) if c is not None else np.nan))
        if k == 0:
            notes[p.epsilon] = "below MC resolution"
            rows.append(_row(p, "mc_bylogp", np.nan, np.nan, exact))
        else:
            ph = k / n_paths
            rows.append(_row(p, "mc_bylogp", p.b_eps * np.log(ph),
                             p.b_eps * np.sqrt((1 - ph) / (n_paths * ph)), exact))
        if c is not None:
            rows.append(_row(p, "exact_bylogp", exact, 0.0, exact))
    summary = dict(rate=rate, delta=delta, n_paths=n_paths, seed=seed, T=T, H=H,
                   notes={str(k): v for k, v in notes.items()},
                   wilson={str(k): list(v) for k, v in wilson.items()})
    ex = [r["exact"] for r in rows if r["quantity"] == "exact_bylogp"]
    if ex:
        summary["exact_sequence"] = ex
        summary["gap_to_minus_rate"] = [e + rate for e in ex]
    return Report(rows, summary)


def _fbm_endpoint(H, T, n_paths, seed):
    """``B^H_T`` samples, one stream per path (a single-step exact sampler)."""
    return sample_fbm(FbmSpec(H, 1, T, 1, seed, "cholesky"), n_paths).values[:, -1, 0]
