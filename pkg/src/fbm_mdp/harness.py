"""Experiment registry, configuration checks and reproducible runs.

Each experiment writes CSV tables and a ``manifest.json`` into
``config.output_dir``.  CSV bytes depend only on the configuration: every
Monte Carlo path draws from its own stream keyed by ``(seed, stream, path)``.
"""

import dataclasses
import hashlib
import json
import logging
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _mc, _rng
from .averaging import averaging_gap, ergodic_f1bar, gauss_hermite_drift, gauss_hermite_f1bar
from .fbm import FbmSpec, fbm_covariance, sample_bm, sample_fbm
from .fracpath import (GridPath, lambda_alpha, riemann_stieltjes_sum, w_alpha_one_norm,
                       young_integral)
from .mdp import (clt_variance_check, empirical_mdp_rate,
                  rate_function_endpoint, rate_function_exit_level, skeleton_from_system)
from .sde import (ScaleParams, solve_controlled_two_scale, solve_khasminskii_auxiliary,
                  solve_ode, solve_single_scale)
from .systems import SYSTEMS, a_function, f1bar_exact_jacobian, get_system

log = logging.getLogger(__name__)

VERSION = "0.1.0"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    H: float = 0.75
    alpha: float = 0.3
    theta: float = 0.4
    epsilon_chain: tuple = (1e-1, 1e-2, 1e-3)
    delta: float = 1.0
    T: float = 1.0
    M: int = 1024
    Delta: Optional[float] = None
    n_paths: int = 1000
    seed: int = 0
    system: str = "SS-LIN"
    output_dir: str = "out"
    beta2: Optional[float] = None
    method: str = "cholesky"

    def __post_init__(self):
        self.epsilon_chain = tuple(float(e) for e in np.atleast_1d(self.epsilon_chain))

    def to_dict(self):
        return dataclasses.asdict(self) | {"epsilon_chain": list(self.epsilon_chain)}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "experiment" not in d:
            raise ConfigError("config needs an 'experiment' field")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = dict(REGISTRY[d["experiment"]].defaults) if d["experiment"] in REGISTRY else {}
        base.update(d)
        return cls(**base)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_updates(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass
class RunManifest:
    config: dict
    input_hash: str
    outputs: list
    wall_clock: float
    rng_streams: list
    summary: dict = field(default_factory=dict)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    anchor: str
    runner: object
    defaults: dict


REGISTRY = {}


def experiment(name, description, anchor, **defaults):
    def deco(fn):
        REGISTRY[name] = Experiment(name, description, anchor, fn, defaults)
        return fn
    return deco


def list_experiments():
    lines = [f"{e.name:24s} {e.description}  [anchor: {e.anchor}]" for e in REGISTRY.values()]
    return "\n".join(lines)


# ---------------------------------------------------------------- validation

def khasminskii_delta(epsilon, theta, gamma=None):
    """Block length ``eps^(gamma+1) h(eps)^2 |ln eps|`` with ``gamma in (0, theta - 1/2)``."""
    if theta <= 0.5:
        raise ValueError("block schedule needs theta > 1/2")
    gamma = 0.5 * (theta - 0.5) if gamma is None else gamma
    return epsilon ** (gamma + 1) * epsilon ** (-theta) * abs(math.log(epsilon))


def validate_config(config):
    """List of violated invariants; entries starting with ``warning:`` are advisory."""
    out = []
    c = config
    if c.experiment not in REGISTRY:
        out.append(f"unknown experiment {c.experiment!r}")
    if not 0 < c.H < 1:
        out.append(f"H={c.H} outside (0, 1)")
    if c.alpha <= 1 - c.H:
        out.append(f"alpha below 1−H (alpha={c.alpha}, 1−H={1 - c.H:.6g})")
    if c.alpha >= 0.5:
        out.append(f"alpha not below 1/2 (alpha={c.alpha})")
    if not 0 < c.theta < 1:
        out.append(f"theta={c.theta} outside (0, 1)")
    eps = np.asarray(c.epsilon_chain, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(eps > 1) or np.any(np.diff(eps) >= 0):
        out.append("epsilon_chain must be strictly decreasing in (0, 1]")
    if c.M < 1 or (c.M & (c.M - 1)):
        out.append(f"M must be a power of two (M={c.M})")
    if not c.T > 0:
        out.append(f"T must be positive (T={c.T})")
    if c.n_paths < 2:
        out.append(f"n_paths must be at least 2 (n_paths={c.n_paths})")
    if c.delta < 0:
        out.append(f"delta must be non-negative (delta={c.delta})")
    if c.method not in ("cholesky", "volterra", "circulant"):
        out.append(f"unknown fBm method {c.method!r}")
    if c.system not in SYSTEMS:
        out.append(f"unknown system {c.system!r}")
    if c.Delta is not None and c.M >= 1 and c.T > 0:
        r = c.Delta / (c.T / c.M)
        if c.Delta <= 0 or abs(r - round(r)) > 1e-9 * max(r, 1):
            out.append(f"Delta={c.Delta} is not a positive multiple of the grid step T/M")
    beta2 = c.beta2
    if beta2 is None and c.system in SYSTEMS:
        spec = get_system(c.system)
        beta2 = spec.beta2 if spec.mode == "two_scale" else None
    if beta2 is not None and 0 < c.theta < 1:
        for e in eps[(eps > 0) & (eps <= 1)]:
            if e ** ((1 - c.theta) / 2) >= beta2 / 2:
                out.append(f"warning: sqrt(eps)h(eps) exceeds beta2/2 at eps={e:g} "
                           f"({e ** ((1 - c.theta) / 2):.4g} >= {beta2 / 2:.4g})")
    if c.experiment == "exp-khasminskii-delta" and c.Delta is None and c.theta <= 0.5:
        out.append("warning: theta <= 1/2, block schedule not applicable; scanning Delta instead")
    return out


def errors_only(violations):
    return [v for v in violations if not v.startswith("warning:")]


# ------------------------------------------------------------------- output

def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_cell(v) for v in r) + "\n")


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if np.isnan(v) else repr(v)


def _input_hash(config):
    payload = json.dumps({"config": config.to_dict() | {"output_dir": None},
                          "version": VERSION}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def run_experiment(config):
    """Validate, run and record one experiment; returns the :class:`RunManifest`."""
    errs = errors_only(validate_config(config))
    if errs:
        raise ConfigError("; ".join(errs))
    exp = REGISTRY[config.experiment]
    os.makedirs(config.output_dir, exist_ok=True)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        outputs, summary, streams = exp.runner(config)
    manifest = RunManifest(config.to_dict(), _input_hash(config),
                           [os.path.basename(p) for p in outputs],
                           time.perf_counter() - t0, streams, summary)
    manifest.to_json(os.path.join(config.output_dir, "manifest.json"))
    with open(os.path.join(config.output_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable)
    return manifest


def _out(config, name):
    return os.path.join(config.output_dir, name)


def _stream(name, purpose):
    ids = {"fbm": _rng.FBM, "bm": _rng.BM, "frozen": _rng.FROZEN}
    return {"stream": name, "id": ids[name], "purpose": purpose}


# -------------------------------------------------------------- experiments

@experiment("exp-fbm-cov", "empirical fBm covariance vs closed form, Cholesky and Volterra samplers",
            "covariance law of fractional Brownian motion", n_paths=10000, M=1024)
def _exp_fbm_cov(c):
    times = np.array([0.25, 0.5, 0.75, 1.0]) * c.T
    idx = np.rint(times / c.T * c.M).astype(int)
    rows, summary = [], {}
    for method in ("cholesky", "volterra"):
        spec = FbmSpec(c.H, 1, c.T, c.M, c.seed, method)

        def run(first, n):
            return sample_fbm(spec, n, first).values[:, idx, 0]
        X = np.concatenate(_mc.map_chunks(run, c.n_paths, 500))
        for a in range(len(idx)):
            for b in range(a, len(idx)):
                prod = X[:, a] * X[:, b]
                emp = float(prod.mean())
                se = float(prod.std(ddof=1) / np.sqrt(c.n_paths))
                exact = fbm_covariance(times[a], times[b], c.H)
                rows.append((method, c.H, times[a], times[b], emp, se, exact))
                summary[f"{method}:{times[a]:g},{times[b]:g}"] = emp
    p = _out(c, "fbm_cov.csv")
    _write_csv(p, ("method", "H", "s", "t", "empirical", "stderr", "exact"), rows)
    return [p], summary, [_stream("fbm", "fBm paths (both samplers share the normals)")]


@experiment("exp-young-ibp", "integration by parts and the Weyl-derivative bound on random path pairs",
            "pathwise Young integral and its Lambda_alpha bound", n_paths=200, M=1024, H=0.8)
def _exp_young_ibp(c):
    spec = FbmSpec(c.H, 2, c.T, c.M, c.seed, "circulant")
    rows = []
    n_ok_bound, max_ibp = 0, 0.0
    for k in range(c.n_paths):
        v = sample_fbm(spec, 1, k).values[0].copy()
        if k % 2:  # every other pair mixes in a smooth path
            t = np.linspace(0, c.T, c.M + 1)
            v[:, 1] = np.sin(3 * t + k) - np.sin(k)
        g, hp = GridPath(c.T, v[:, :1]), GridPath(c.T, v[:, 1:])
        gh = young_integral(g, hp, c.alpha).values[-1, 0]
        hg = young_integral(hp, g, c.alpha).values[-1, 0]
        rhs = v[-1, 0] * v[-1, 1] - v[0, 0] * v[0, 1]
        scale = np.abs(v[:, 0]).max() * np.abs(v[:, 1]).max()
        rel = abs(gh + hg - rhs) / scale
        bound = lambda_alpha(hp, c.alpha) * w_alpha_one_norm(g, c.alpha)
        ok = abs(gh) <= bound
        n_ok_bound += ok
        max_ibp = max(max_ibp, rel)
        rs = riemann_stieltjes_sum(g, hp).values[-1, 0]
        rows.append((k, gh, hg, rhs, rel, rs, bound, ok))
    p = _out(c, "young_ibp.csv")
    _write_csv(p, ("pair", "int_g_dh", "int_h_dg", "ibp_rhs", "ibp_rel_err", "rs_sum",
                   "bound", "bound_ok"), rows)
    return [p], dict(max_ibp_rel_err=float(max_ibp), bound_holds=int(n_ok_bound),
                     n_pairs=c.n_paths), [_stream("fbm", "path pairs")]


def _sup_sq_errors(spec, p, c, xlim):
    fspec = FbmSpec(c.H, spec.d1, c.T, c.M, c.seed, c.method)

    def run(first, n):
        x = solve_single_scale(spec, p, sample_fbm(fspec, n, first)).values
        return np.max(np.sum((x - xlim) ** 2, axis=-1), axis=-1)
    return np.concatenate(_mc.map_chunks(run, c.n_paths, 250))


@experiment("exp-ode-limit", "E sup|x^eps - x|^2 along an epsilon chain and its log-log slope",
            "small-noise limit x^eps -> x", epsilon_chain=(1e-1, 1e-2, 1e-3, 1e-4),
            system="SS-LIN", n_paths=1000)
def _exp_ode_limit(c):
    spec = get_system(c.system)
    xlim = solve_ode(spec, T=c.T, M=c.M).values
    rows, means = [], []
    for e in c.epsilon_chain:
        s = _sup_sq_errors(spec, ScaleParams(e, c.theta), c, xlim)
        m, se = _mc.mean_stderr(s)
        rows.append((e, float(m), float(se)))
        means.append(float(m))
    slope = float(np.polyfit(np.log(c.epsilon_chain), np.log(means), 1)[0])
    p = _out(c, "ode_limit.csv")
    _write_csv(p, ("epsilon", "estimate", "stderr"), rows)
    return [p], dict(slope=slope, estimates=means), [_stream("fbm", "slow driver")]


@experiment("exp-clt-variance", "h(eps)^2 Var(z^eps_T) vs the double-sum limit variance",
            "central-limit normalisation of the deviation process",
            epsilon_chain=(1e-2, 1e-3), system="SS-LIN", n_paths=4000)
def _exp_clt(c):
    spec = get_system(c.system)
    rep = clt_variance_check(spec, [ScaleParams(e, c.theta) for e in c.epsilon_chain],
                             c.n_paths, c.seed, c.T, c.M, c.H, c.method)
    p = _out(c, "clt_variance.csv")
    rep.to_csv(p)
    return [p], rep.summary, [_stream("fbm", "slow driver")]


@experiment("exp-averaging", "ergodic vs Gauss-Hermite averaged drift, and the strong averaging gap",
            "averaging principle for the slow component", system="TS-OU", theta=0.6,
            n_paths=500, epsilon_chain=(1e-1, 1e-2, 1e-3))
def _exp_averaging(c):
    spec = get_system(c.system)
    a = a_function(c.system)
    probes = np.linspace(-2, 2, 9)
    erg_rows, gh_rows = [], []
    for k, x in enumerate(probes):
        est = ergodic_f1bar(spec, x, seed=c.seed, first_path=64 * k)
        erg_rows.append((x, est.value, est.stderr))
        gh_rows.append((x, gauss_hermite_f1bar(spec.f1, a, x), 0.0))
    p1, p2, p3 = (_out(c, n) for n in ("f1bar_ergodic.csv", "f1bar_gauss_hermite.csv",
                                       "averaging_gap.csv"))
    _write_csv(p1, ("x", "f1bar", "stderr"), erg_rows)
    _write_csv(p2, ("x", "f1bar", "stderr"), gh_rows)
    drift = gauss_hermite_drift(spec.f1, a)
    gaps = []
    for e in c.epsilon_chain:
        g = averaging_gap(spec, ScaleParams(e, c.theta), c.n_paths, c.seed, drift, T=c.T, H=c.H)
        gaps.append((e, g.value, g.stderr))
    _write_csv(p3, ("epsilon", "estimate", "stderr"), gaps)
    diff = max(abs(r[1] - q[1]) for r, q in zip(erg_rows, gh_rows))
    return [p1, p2, p3], dict(max_method_diff=diff, gaps=[g[1] for g in gaps]), [
        _stream("frozen", "frozen fast chains"), _stream("fbm", "slow driver"),
        _stream("bm", "fast driver")]


def khasminskii_scan(spec, params, Deltas, n_paths, seed, T, M, H, drift, chunk=100):
    """Per ``Delta``: ``E sup|x~ - x^|^2`` and ``E sup|x^ - xbar|^2`` (means, stderrs)."""
    fspec = FbmSpec(H, spec.d1, T, M, seed, "circulant")
    xbar = solve_ode(spec, T=T, M=M, drift=drift).values

    def run(first, n):
        B = sample_fbm(fspec, n, first)
        W = sample_bm(spec.d2, T, M, seed, n, first)
        xt = solve_controlled_two_scale(spec, params, B, W, (None, None)).x
        out = []
        for D in Deltas:
            xh = solve_khasminskii_auxiliary(spec, params, B, W, (None, None), D, x_tilde=xt).x
            a = np.max(np.sum((xt.values - xh.values) ** 2, axis=-1), axis=-1)
            b = np.max(np.sum((xh.values - xbar) ** 2, axis=-1), axis=-1)
            out.append(np.stack([a, b], axis=-1))
        return np.stack(out, axis=1)  # (n, len(Deltas), 2)

    S = np.concatenate(_mc.map_chunks(run, n_paths, chunk))
    mean, se = _mc.mean_stderr(S)
    return mean, se


@experiment("exp-khasminskii-delta", "auxiliary-process error vs block length Delta at fixed epsilon",
            "Khasminskii time discretisation error C(eps/Delta + Delta)", system="TS-OU",
            theta=0.6, epsilon_chain=(1e-2,), n_paths=200, T=1.0)
def _exp_khasminskii(c):
    spec = get_system(c.system)
    e = c.epsilon_chain[0]
    params = ScaleParams(e, c.theta)
    M = c.M
    need = int(2 ** math.ceil(math.log2(c.T * spec.L / (0.05 * e))))
    M = max(M, need)
    h = c.T / M
    if c.Delta is not None:
        Deltas = [c.Delta]
    else:
        Deltas = [h * 2 ** k for k in range(int(math.log2(M)) - 1)]
        Deltas = [D for D in Deltas if D >= e / 16]
    drift = gauss_hermite_drift(spec.f1, a_function(c.system))
    mean, se = khasminskii_scan(spec, params, Deltas, c.n_paths, c.seed, c.T, M, c.H, drift)
    rows = [(D, mean[k, 0], se[k, 0], mean[k, 1], se[k, 1]) for k, D in enumerate(Deltas)]
    p = _out(c, "khasminskii.csv")
    _write_csv(p, ("Delta", "aux_gap", "aux_gap_stderr", "avg_gap", "avg_gap_stderr"), rows)
    k_min = int(np.argmin(mean[:, 1]))
    return [p], dict(Deltas=Deltas, aux_gap=mean[:, 0].tolist(), avg_gap=mean[:, 1].tolist(),
                     argmin_Delta=Deltas[k_min], sqrt_eps=math.sqrt(e), M=M), [
        _stream("fbm", "slow driver"), _stream("bm", "fast driver")]


@experiment("exp-rate-endpoint", "endpoint rate function and exit-level rate of the skeleton",
            "rate function as minimal Cameron-Martin energy", system="SS-FREE", delta=1.0)
def _exp_rate_endpoint(c):
    spec = get_system(c.system)
    if spec.mode == "two_scale":
        drift = lambda x: -x + np.exp(-1.0 / (8.0 * a_function(c.system)(x)))
        prob = skeleton_from_system(spec, c.T, c.M, c.H, c.alpha, drift=drift,
                                    jacobian=f1bar_exact_jacobian(c.system))
    else:
        prob = skeleton_from_system(spec, c.T, c.M, c.H, c.alpha)
    rows = []
    for scale in (0.5, 1.0, 2.0):
        sol = rate_function_endpoint(prob, [scale * c.delta])
        rows.append((c.M, scale * c.delta, sol.cost))
    rate = rate_function_exit_level(prob, c.delta)
    p = _out(c, "rate_endpoint.csv")
    _write_csv(p, ("M", "target", "cost"), rows)
    return [p], dict(rate=rate, delta=c.delta, H=c.H, T=c.T, M=c.M), []


@experiment("exp-mdp-trend", "b(eps) log P(|z_T| >= delta) along an epsilon chain vs -I",
            "moderate deviation principle with speed b(eps)", system="SS-FREE", theta=0.4,
            epsilon_chain=(1e-1, 1e-2, 1e-3, 1e-4), n_paths=10000, M=256)
def _exp_mdp_trend(c):
    spec = get_system(c.system)
    rep = empirical_mdp_rate(spec, [ScaleParams(e, c.theta) for e in c.epsilon_chain],
                             c.delta, c.n_paths, c.seed, c.T, c.M, c.H, c.method)
    p = _out(c, "mdp_trend.csv")
    rep.to_csv(p)
    return [p], rep.summary, [_stream("fbm", "slow driver")]
