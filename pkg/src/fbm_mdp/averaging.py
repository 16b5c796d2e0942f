"""Averaged slow drift ``f1bar(x) = int f1(x, y) mu_x(dy)`` and averaging diagnostics."""

import itertools
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import _mc
from .fbm import FbmSpec, sample_bm, sample_fbm
from .sde import ScaleParams, solve_frozen_fast, solve_ode, solve_two_scale


class Estimate(NamedTuple):
    value: float
    stderr: float


@dataclass(frozen=True)
class AveragedDrift:
    evaluator: Callable
    method: str
    error_estimate: float = 0.0

    def __call__(self, x):
        return self.evaluator(x)

    def tabulate(self, xs):
        xs = np.asarray(xs, dtype=float)
        vals = np.array([np.ravel(self.evaluator(np.array([[x]])))[0] for x in xs])
        return xs, vals

    def to_csv(self, path, xs, stderr=None):
        xs, vals = self.tabulate(xs)
        se = np.full_like(vals, self.error_estimate) if stderr is None else np.asarray(stderr)
        np.savetxt(path, np.column_stack([xs, vals, se]), delimiter=",",
                   header="x,f1bar,stderr", comments="", fmt="%.17g")

    @classmethod
    def from_table(cls, xs, vals, stderr=0.0):
        """Piecewise-linear interpolant of tabulated values (scalar slow variable)."""
        xs, vals = np.asarray(xs, float), np.asarray(vals, float)
        ev = lambda x: np.interp(np.asarray(x, float), xs, vals)
        return cls(ev, "ergodic", float(np.max(stderr)))


def ergodic_f1bar(spec, x, T_burn=None, T_avg=None, M=None, seed=0, n_paths=64,
                  f1=None, first_path=0):
    """Time average of ``f1(x, y_t)`` along the frozen fast process.

    ``n_paths`` independent chains, each averaged over ``[T_burn, T_burn + T_avg]``
    (trapezoid rule); the standard error is taken across chains.  Defaults:
    ``T_burn = 10/beta1``, ``T_avg = 100/beta1`` and a time step of
    ``0.01/beta1``.
    """
    b1 = spec.beta1
    T_burn = 10.0 / b1 if T_burn is None else T_burn
    T_avg = 100.0 / b1 if T_avg is None else T_avg
    if T_burn < 5.0 / b1:
        raise ValueError(f"T_burn={T_burn} below 5/beta1={5.0 / b1}")
    T_long = T_burn + T_avg
    if M is None:
        M = int(np.ceil(T_long / (0.01 / b1)))
    f1 = spec.f1 if f1 is None else f1
    x = np.asarray(x, dtype=float).reshape(spec.m)
    h = T_long / M
    i0 = int(round(T_burn / h))

    def chunk(first, n):
        y = solve_frozen_fast(spec, x, T_long, M, seed, n_paths=n,
                              first_path=first_path + first).values[:, i0:]
        B = y.shape[0]
        xb = np.broadcast_to(x, (B * y.shape[1], spec.m))
        v = np.asarray(f1(xb, y.reshape(-1, spec.n)), float).reshape(B, y.shape[1], -1)
        return (v[:, 1:-1].sum(axis=1) + 0.5 * (v[:, 0] + v[:, -1])) / (y.shape[1] - 1)

    means = np.concatenate(_mc.map_chunks(chunk, n_paths, chunk=32, workers=1))
    val, se = _mc.mean_stderr(means)
    if val.size == 1:
        return Estimate(float(val[0]), float(se[0]))
    return Estimate(val, se)


def gauss_hermite_f1bar(f1, a, x, order=32, n=1):
    """``E f1(x, Y)`` for ``Y ~ N(0, I / (4 a(x)))`` by tensor Gauss-Hermite.

    The substitution ``y = z / sqrt(2 a(x))`` maps the density proportional to
    ``exp(-2 a |y|^2)`` onto the Hermite weight ``exp(-|z|^2)``.
    """
    if n > 3:
        raise ValueError("tensor Gauss-Hermite limited to n <= 3; use ergodic_f1bar")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ax = float(np.ravel(a(x[None, :]))[0])
    if not ax > 0:
        raise ValueError(f"dissipativity violated: a(x) = {ax} must be positive")
    z, w = np.polynomial.hermite.hermgauss(order)
    nodes = np.array(list(itertools.product(z, repeat=n))) / np.sqrt(2 * ax)
    weights = np.prod(np.array(list(itertools.product(w, repeat=n))), axis=1) / np.pi ** (n / 2)
    vals = np.asarray(f1(np.broadcast_to(x, (nodes.shape[0], x.size)), nodes), float)
    vals = vals.reshape(nodes.shape[0], -1)
    out = weights @ vals
    return float(out[0]) if out.size == 1 else out


def gauss_hermite_drift(f1, a, order=32, n=1):
    """:class:`AveragedDrift` evaluating ``gauss_hermite_f1bar`` row by row."""
    def ev(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1]) if x.ndim else x.reshape(1, 1)
        out = np.array([np.atleast_1d(gauss_hermite_f1bar(f1, a, xi, order, n)) for xi in flat])
        return out.reshape(x.shape if x.ndim else ())
    return AveragedDrift(ev, "gauss_hermite", 0.0)


def averaging_gap(spec, params, n_paths, seed, f1bar, T=1.0, M=None, H=0.75,
                  chunk=100, workers=None):
    """MC estimate of ``E sup_t |x^eps_t - xbar_t|^2`` with ``xbar`` solving ``dx = f1bar(x) dt``.

    ``M`` defaults to the coarsest power of two satisfying the fast-step guard.
    """
    if M is None:
        need = T * spec.L / (0.05 * params.epsilon)
        M = int(2 ** np.ceil(np.log2(need)))
    xbar = solve_ode(spec, T=T, M=M, drift=f1bar).values
    fspec = FbmSpec(H, spec.d1, T, M, seed, "circulant")

    def run(first, n):
        B = sample_fbm(fspec, n, first)
        W = sample_bm(spec.d2, T, M, seed, n, first)
        x = solve_two_scale(spec, params, B, W).x.values
        return np.max(np.sum((x - xbar) ** 2, axis=-1), axis=-1)

    sups = _mc.concat(_mc.map_chunks(run, n_paths, chunk, workers))
    m, se = _mc.mean_stderr(sups)
    return Estimate(float(m), float(se))


def scale_chain(epsilons, theta):
    return [ScaleParams(e, theta) for e in epsilons]
