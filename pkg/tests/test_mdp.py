import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from fbm_mdp import (GridPath, ScaleParams, UnreachableTargetError, cameron_martin_apply,
                     fbm_covariance, volterra_kernel)
from fbm_mdp.fbm import norm_weights
from fbm_mdp.mdp import (SkeletonProblem, build_response_matrix, clt_variance_check,
                         empirical_mdp_rate, exact_exit_log_prob, limit_variance,
                         rate_function_endpoint, rate_function_exit_level, skeleton_from_system,
                         solve_skeleton, two_scale_skeleton_v_independence, wilson_interval)
from fbm_mdp.sde import deviation_path, solve_controlled_single, solve_ode
from fbm_mdp.systems import f1bar_exact, f1bar_exact_jacobian, ss_free, ss_lin, ss_nl, ts_ou


def constant_problem(b, M=256, H=0.75, T=1.0, basis="weighted", sigma=1.0):
    base = GridPath(T, np.zeros((M + 1, 1)))
    return SkeletonProblem(base, lambda x: np.full((x.shape[0], 1, 1), b),
                           lambda x: np.full((x.shape[0], 1, 1), sigma), H, 0.3, 1, basis)


def random_control(M, H=0.75, seed=0, basis="weighted"):
    r = np.random.default_rng(seed)
    s = np.linspace(0, 1, M + 1)
    c = r.normal() * np.cos(3 * s) + r.normal() * s ** 2 + r.normal()
    return cameron_martin_apply(c, H, 1.0, basis)


def response_by_columns(problem, basis):
    """Column j: skeleton endpoint under the j-th unit coefficient vector."""
    M = problem.M
    cols = []
    for j in range(M + 1):
        e = np.zeros(M + 1)
        e[j] = 1.0
        cols.append(solve_skeleton(problem, cameron_martin_apply(e, problem.H, problem.T,
                                                                 basis)).values[-1, 0])
    return np.array(cols)[None, :]


def projected_gradient_qp(R, w, t, iters=20000):
    """min 1/2 c^T W c subject to R c = t by projected gradient descent."""
    RRt = R @ R.T
    c = R.T @ np.linalg.solve(RRt, t)
    proj = lambda g: g - R.T @ np.linalg.solve(RRt, R @ g)
    eta = 1.0 / w.max()
    for _ in range(iters):
        step = proj(w * c)
        c = c - eta * step
        if np.linalg.norm(step) < 1e-15 * np.linalg.norm(c):
            break
    return 0.5 * c @ (w * c)


# ---------------------------------------------------------------- skeleton

def test_zero_control_zero_path():
    prob = constant_problem(-1.0)
    z = solve_skeleton(prob, cameron_martin_apply(np.zeros(257), 0.75, 1.0))
    assert np.all(z.values == 0)


def test_free_skeleton_is_the_control_path():
    prob = constant_problem(0.0)
    u = random_control(256)
    assert np.max(np.abs(solve_skeleton(prob, u).values - u.u.values)) < 1e-6


@pytest.mark.parametrize("b", [-1.0, 0.5])
def test_variation_of_constants(b):
    M = 4096
    prob = constant_problem(b, M)
    u = random_control(M, seed=2)
    zT = solve_skeleton(prob, u).values[-1, 0]
    s = np.linspace(0, 1, M + 1)
    uu = u.u.values[:, 0]
    # integrate by parts: z(T) = u(T) + b int e^{b(T-s)} u(s) ds
    ref = uu[-1] + b * integrate.simpson(np.exp(b * (1 - s)) * uu, x=s)
    assert abs(zT - ref) < 1e-4


def test_grid_mismatch():
    with pytest.raises(ValueError, match="grid mismatch"):
        solve_skeleton(constant_problem(0.0, 64), random_control(128))


# -------------------------------------------------------- response matrix

@pytest.mark.parametrize("basis", ["nodal", "weighted"])
def test_response_matrix_equals_column_solves(basis):
    prob = constant_problem(-0.7, 64, basis=basis)
    R = build_response_matrix(prob)
    assert np.allclose(R, response_by_columns(prob, basis), atol=1e-12)
    u = random_control(64, basis=basis)
    assert abs(R @ u.coeffs[:, 0] - solve_skeleton(prob, u).values[-1, 0]) < 1e-8


def test_free_response_row_is_kernel_times_weight():
    M = 1024
    R = build_response_matrix(constant_problem(0.0, M, basis="nodal"))[0]
    s = np.arange(M + 1) / M
    j = np.arange(M // 8, 7 * M // 8)
    k = np.array([volterra_kernel(1.0, sj, 0.75) for sj in s[j]]) / M
    assert np.max(np.abs(R[j] / k - 1)) < 1e-2
    u = random_control(M, basis="nodal")
    assert abs(R @ u.coeffs[:, 0] - u.u.values[-1, 0]) < 1e-6


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_response_superposition(seed):
    prob = constant_problem(-1.0, 64)
    R = build_response_matrix(prob)
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(2, 65))
    assert np.allclose(R @ (a + b), R @ a + R @ b, atol=1e-10)


def test_zero_diffusion_gives_zero_matrix():
    prob = constant_problem(-1.0, 32, sigma=0.0)
    assert np.all(build_response_matrix(prob) == 0)
    with pytest.raises(UnreachableTargetError, match="unreachable target"):
        rate_function_endpoint(prob, [1.0])


# ---------------------------------------------------------- rate function

def test_zero_target_zero_cost():
    sol = rate_function_endpoint(constant_problem(-1.0), [0.0])
    assert sol.cost == 0 and np.all(sol.optimal_dot_u == 0)


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
@pytest.mark.parametrize("T", [1.0, 2.0])
def test_free_endpoint_cost_kernel_norm(H, T):
    sol = rate_function_endpoint(constant_problem(0.0, 1024, H=H, T=T), [1.0])
    assert abs(sol.cost / (0.5 / T ** (2 * H)) - 1) < 1e-3


@pytest.mark.parametrize("basis", ["nodal", "weighted"])
def test_linear_drift_cost_matches_qp_oracle(basis):
    prob = constant_problem(-1.0, 128, basis=basis)
    R = response_by_columns(prob, basis)
    w = norm_weights(0.75, 1.0, 128, basis)
    ref = projected_gradient_qp(R, w, np.array([1.0]))
    assert abs(rate_function_endpoint(prob, [1.0]).cost / ref - 1) < 1e-4


@given(st.floats(-5, 5).filter(lambda t: abs(t) > 1e-3), st.floats(0.1, 4.0))
@settings(max_examples=20, deadline=None)
def test_quadratic_homogeneity(t, c):
    prob = constant_problem(-1.0, 128)
    a = rate_function_endpoint(prob, [t])
    b = rate_function_endpoint(prob, [c * t])
    assert b.cost == pytest.approx(c * c * a.cost, rel=1e-8)
    assert np.allclose(b.optimal_dot_u, c * a.optimal_dot_u, rtol=1e-8, atol=1e-14)
    assert a.cost >= 0


def test_achieved_path_hits_target_and_kkt():
    prob = skeleton_from_system(ss_nl(), M=512)
    sol = rate_function_endpoint(prob, [0.8])
    assert abs(sol.achieved_path.values[-1, 0] - 0.8) < 1e-8
    assert np.allclose(solve_skeleton(prob, sol.control).values, sol.achieved_path.values)
    R = sol.response_matrix
    wc = norm_weights(prob.H, prob.T, prob.M, prob.basis) * sol.optimal_dot_u[:, 0]
    q, _ = np.linalg.qr(R.T)
    resid = wc - q @ (q.T @ wc)
    assert np.linalg.norm(resid) < 1e-8 * np.linalg.norm(wc)


def test_target_shape_error():
    with pytest.raises(ValueError, match="target must have shape"):
        rate_function_endpoint(constant_problem(0.0, 16), [1.0, 2.0])


def test_skeleton_matches_small_noise_controlled_sde():
    spec = ss_nl()
    M = 1024
    prob = skeleton_from_system(spec, M=M)
    sol = rate_function_endpoint(prob, [1.0])
    p = ScaleParams(1e-6, 0.4)
    x = solve_controlled_single(spec, p, GridPath.zeros(1.0, M), sol.control)
    xlim = solve_ode(spec, T=1.0, M=M, method="euler")
    z = deviation_path(x, xlim, p)
    assert np.max(np.abs(z.values - sol.achieved_path.values)) < 1e-2


@pytest.mark.parametrize("b", [0.0, -1.0])
def test_cost_stable_under_refinement(b):
    c1 = rate_function_endpoint(constant_problem(b, 512), [1.0]).cost
    c2 = rate_function_endpoint(constant_problem(b, 1024), [1.0]).cost
    assert abs(c2 / c1 - 1) < 0.01


def test_exit_level():
    prob = constant_problem(0.0, 1024)
    assert rate_function_exit_level(prob, 0.0) == 0.0
    v = rate_function_exit_level(prob, 1.0)
    assert abs(v - 0.5) < 1e-3
    nl = skeleton_from_system(ss_nl(), M=256)
    assert rate_function_exit_level(nl, 2.0) == pytest.approx(
        4 * rate_function_exit_level(nl, 1.0), rel=1e-8)
    with pytest.raises(ValueError, match="scalar"):
        rate_function_exit_level(SkeletonProblem(GridPath.zeros(1.0, 8, 2), None, None), 1.0)


# ----------------------------------------------------- two-scale contract

def two_scale_problem(M=256):
    return skeleton_from_system(ts_ou(), M=M, drift=f1bar_exact("TS-OU"),
                                jacobian=f1bar_exact_jacobian("TS-OU"))


def test_v_independence():
    prob = two_scale_problem()
    r = np.random.default_rng(5)
    for _ in range(5):
        u = cameron_martin_apply(r.normal(size=257), 0.75, 1.0)
        v = cameron_martin_apply(r.normal(size=257), 0.5, 1.0)
        assert two_scale_skeleton_v_independence(prob, u, v)
    u2 = cameron_martin_apply(r.normal(size=257), 0.75, 1.0)
    assert not np.array_equal(solve_skeleton(prob, (u, v)).values,
                              solve_skeleton(prob, (u2, v)).values)


def test_two_scale_cost_ignores_v_budget():
    prob = two_scale_problem()
    a = rate_function_endpoint(prob, [0.5])
    v = cameron_martin_apply(np.ones(257), 0.5, 1.0)
    assert np.array_equal(solve_skeleton(prob, (a.control, v)).values, a.achieved_path.values)


# -------------------------------------------------------------- CLT scale

def double_sum_oracle(b, H, M, T=1.0):
    """sum_ij e^{b(T - s_i)} e^{b(T - s_j)} Cov(dB_i, dB_j), midpoints s_i."""
    t = np.linspace(0, T, M + 1)
    C = fbm_covariance(t[:, None], t[None, :], H)
    dC = C[1:, 1:] - C[1:, :-1] - C[:-1, 1:] + C[:-1, :-1]
    g = np.exp(b * (T - 0.5 * (t[1:] + t[:-1])))
    return g @ dC @ g


def test_limit_variance_oracles():
    assert limit_variance(ss_free(), M=512) == pytest.approx(1.0, rel=1e-10)
    assert limit_variance(ss_free(), T=2.0, M=512) == pytest.approx(2 ** 1.5, rel=1e-10)
    assert limit_variance(ss_lin(), M=512) == pytest.approx(double_sum_oracle(-1, 0.75, 512),
                                                            rel=1e-8)


def test_clt_free_system_exact_and_mc():
    rep = clt_variance_check(ss_free(), [ScaleParams(1e-3, 0.4)], 4000, 1, M=64)
    est = rep.column("h2_var_zT")[0]
    assert abs(est - 1.0) < 0.05
    assert rep.summary["limit_variance"] == pytest.approx(1.0)


@pytest.mark.slow
def test_clt_linear_system_and_ratio():
    chain = [ScaleParams(1e-2, 0.4), ScaleParams(1e-3, 0.4)]
    rep = clt_variance_check(ss_lin(), chain, 4000, 2, M=256)
    est = rep.column("h2_var_zT")
    target = rep.summary["limit_variance"]
    assert abs(est[1] / target - 1) < 0.1
    assert abs(est[0] / est[1] - 1) < 0.1


@pytest.mark.slow
def test_clt_theta_independence():
    vals = []
    for th in (0.2, 0.4, 0.8):
        r = clt_variance_check(ss_lin(), [ScaleParams(1e-3, th)], 2000, 3, M=128)
        vals.append((r.column("h2_var_zT")[0], r.column("h2_var_zT", "stderr")[0]))
    (a, sa), (b, sb), (c, sc) = vals
    assert abs(a - b) < 3 * np.hypot(sa, sb) and abs(b - c) < 3 * np.hypot(sb, sc)


def test_report_io(tmp_path):
    rep = clt_variance_check(ss_free(), [ScaleParams(1e-1, 0.4)], 50, 0, M=16)
    rep.to_csv(tmp_path / "r.csv")
    rep.to_json(tmp_path / "r.json")
    head = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert head == "epsilon,h_eps,b_eps,quantity,estimate,stderr,exact"
    assert json.loads((tmp_path / "r.json").read_text())["n_paths"] == 50


# --------------------------------------------------------- MDP tail rates

def test_exact_sequence_monotone_toward_rate():
    chain = [ScaleParams(e, 0.4) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    rep = empirical_mdp_rate(ss_free(), chain, 1.0, 100, T=1.0, H=0.75)
    ex = rep.column("exact_bylogp")
    assert np.all(np.diff(ex) > 0) and np.all(ex < -0.5)
    assert abs(ex[2] / -0.5 - 1) < 0.25
    assert rep.summary["rate"] == pytest.approx(0.5, abs=2e-3)


def test_exact_tail_oracle():
    p = ScaleParams(1e-2, 0.4)
    x = p.h_eps / 1.0
    assert exact_exit_log_prob(p, 1.0, 1.0, 0.75) == pytest.approx(np.log(2 * stats.norm.sf(x)),
                                                                   rel=1e-12)


def test_small_delta_values_vanish():
    chain = [ScaleParams(1e-2, 0.4)]
    vals = [empirical_mdp_rate(ss_free(), chain, d, 10, rate=0.0).column("exact_bylogp")[0]
            for d in (1e-1, 1e-3, 1e-6)]
    assert abs(vals[2]) < abs(vals[1]) < abs(vals[0]) and abs(vals[2]) < 1e-4


def test_mc_matches_exact_at_large_probability():
    rep = empirical_mdp_rate(ss_free(), [ScaleParams(1e-1, 0.4)], 1.0, 20_000, seed=4)
    mc, se = rep.column("mc_bylogp")[0], rep.column("mc_bylogp", "stderr")[0]
    assert abs(mc - rep.column("exact_bylogp")[0]) < 3 * se


def test_below_mc_resolution():
    rep = empirical_mdp_rate(ss_free(), [ScaleParams(1e-4, 0.4)], 1.0, 50, seed=1)
    assert rep.summary["notes"] == {"0.0001": "below MC resolution"}
    assert np.isnan(rep.column("mc_bylogp")[0])


def test_mc_route_for_general_system():
    rep = empirical_mdp_rate(ss_lin(), [ScaleParams(1e-1, 0.4)], 0.5, 400, seed=2, M=64)
    assert np.isnan(rep.column("mc_bylogp", "exact")[0])
    assert rep.summary["rate"] > 0
    with pytest.raises(ValueError, match="scalar"):
        from fbm_mdp import SystemSpec
        spec2 = SystemSpec(mode="single_scale", m=2, d1=2, f=lambda x: -x,
                           sigma=lambda x: np.ones_like(x), x0=(0.0, 0.0))
        empirical_mdp_rate(spec2, [ScaleParams(1e-1)], 1.0, 10)


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100)
    assert lo == pytest.approx(0.0, abs=1e-15) and 0 < hi < 0.05
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi and hi - 0.5 == pytest.approx(0.5 - lo)
