import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gamma

from fbm_mdp import (FbmSpec, GridPath, holder_norm, lambda_alpha, riemann_stieltjes_sum,
                     sample_fbm, w_alpha_inf_norm, w_alpha_one_norm, w_one_minus_alpha_norm,
                     weyl_left, weyl_right, young_integral)
from fbm_mdp.fracpath import estimate_holder_exponent, lag_weights


def line(M=64, T=1.0):
    return GridPath.from_function(lambda t: t, T, M)


def fbm_path(H, M, seed=0, d=1, k=0):
    return sample_fbm(FbmSpec(H, d, 1.0, M, seed, "circulant"), 1, k)[0]


def fbm_pair(H, M, seed, k):
    v = sample_fbm(FbmSpec(H, 2, 1.0, M, seed, "circulant"), 1, k).values[0]
    return GridPath(1.0, v[:, :1]), GridPath(1.0, v[:, 1:])


# ------------------------------------------------------------------ GridPath

def test_gridpath_basic_shape():
    g = GridPath.from_function(np.sin, 2.0, 8)
    assert (g.M, g.d, g.h) == (8, 1, 0.25)
    assert np.allclose(g.times, np.linspace(0, 2, 9))
    assert not g.values.flags.writeable


def test_gridpath_rejects_degenerate_and_nonfinite():
    with pytest.raises(ValueError, match="degenerate grid"):
        GridPath(1.0, np.zeros((1, 1)))
    with pytest.raises(ValueError):
        GridPath(1.0, np.array([[0.0], [np.nan]]))


def test_gridpath_csv_roundtrip(tmp_path):
    g = fbm_path(0.7, 32, d=2)
    p = tmp_path / "p.csv"
    g.to_csv(p)
    assert p.read_text().splitlines()[0] == "t,comp_0,comp_1"
    back = GridPath.from_csv(p)
    assert np.array_equal(back.values, g.values)
    assert back.T == g.T


def test_window_and_coarsen():
    g = line(8)
    w = g.window(2, 6)
    assert w.M == 4 and np.isclose(w.T, 0.5)
    assert np.allclose(w.values[:, 0], g.values[2:7, 0])
    c = g.coarsen(2)
    assert c.M == 4 and np.allclose(c.values[:, 0], g.values[::2, 0])


# ----------------------------------------------------------- product weights

@pytest.mark.parametrize("p", [-1.3, -0.7, 0.2])
def test_lag_weights_exact_for_linear_difference(p):
    # D(r) = r on [0, nh] -> int r^(p+1) dr
    n, h = 7, 0.1
    a, b = lag_weights(p, n, h)
    r = np.arange(n + 1) * h
    approx = np.sum(a[1:] * r[:-1] + b[1:] * r[1:])
    assert np.isclose(approx, (n * h) ** (p + 2) / (p + 2), rtol=1e-12)


# --------------------------------------------------------------- holder_norm

def test_holder_norm_constant_and_line():
    assert holder_norm(GridPath(1.0, np.full((11, 1), -3.0)), 0.5) == pytest.approx(3.0)
    assert holder_norm(line(16), 1.0) == pytest.approx(2.0)


def test_holder_norm_degenerate_grid():
    with pytest.raises(ValueError, match="degenerate grid"):
        holder_norm(GridPath(1.0, np.zeros((1, 1))), 0.5)


def _holder_pair(eta):
    fine = fbm_path(0.75, 2 ** 13, seed=4)
    coarse = fine.coarsen(2)
    return holder_norm(coarse, eta), holder_norm(fine, eta)


@pytest.mark.slow
def test_holder_norm_stable_below_hurst():
    a, b = _holder_pair(0.70)
    assert abs(b / a - 1) < 0.05


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="one refinement step grows the eta=0.8 norm by about "
                   "2^(0.05)*log-factor, far below 1.5; see decisions ledger")
def test_holder_norm_grows_above_hurst():
    a, b = _holder_pair(0.80)
    assert b / a >= 1.5


@pytest.mark.slow
def test_holder_norm_grows_above_hurst_but_not_below():
    # what refinement can show: growth ratio above H exceeds the one below H
    lo = _holder_pair(0.70)
    hi = _holder_pair(0.80)
    assert hi[1] / hi[0] > lo[1] / lo[0]


# ------------------------------------------------------------ fractional norms

def test_w_alpha_inf_norm_closed_form():
    assert w_alpha_inf_norm(GridPath.zeros(1.0, 16), 0.25) == 0.0
    assert w_alpha_inf_norm(line(64), 0.25) == pytest.approx(1 + 4 / 3, rel=1e-12)


def test_w_one_minus_alpha_norm_closed_form():
    assert w_one_minus_alpha_norm(GridPath.zeros(1.0, 16), 0.25) == 0.0
    assert w_one_minus_alpha_norm(line(64), 0.25) == pytest.approx(5.0, rel=1e-12)


@pytest.mark.slow
def test_w_alpha_inf_norm_refinement_stable():
    fine = fbm_path(0.9, 2 ** 12, seed=2)
    a, b = w_alpha_inf_norm(fine.coarsen(2), 0.25), w_alpha_inf_norm(fine, 0.25)
    assert abs(b / a - 1) < 0.02


@pytest.mark.slow
def test_w_one_minus_alpha_norm_refinement_stable():
    fine = fbm_path(0.8, 2 ** 11, seed=2)
    a, b = w_one_minus_alpha_norm(fine.coarsen(2), 0.25), w_one_minus_alpha_norm(fine, 0.25)
    assert np.isfinite(b)
    assert abs(b / a - 1) < 0.05


def test_w_alpha_one_norm_line():
    # int_0^1 s^(1-a) ds + int_0^1 int_0^s (s-y)^(-a) dy ds = 1/(2-a) + 1/((1-a)(2-a))
    a = 0.3
    exact = 1 / (2 - a) + 1 / ((1 - a) * (2 - a))
    errs = [abs(w_alpha_one_norm(line(M), a) / exact - 1) for M in (64, 256)]
    # outer trapezoid on s^(1-a): error O(h^(2-a))
    assert errs[0] < 1e-3 and errs[1] < errs[0] / 4


def test_norms_reject_bad_alpha():
    with pytest.raises(ValueError):
        w_alpha_inf_norm(line(8), 0.5)
    with pytest.raises(ValueError):
        lambda_alpha(line(8), 0.0)


# ------------------------------------------------------------- Weyl derivatives

def test_weyl_left_constant():
    g = GridPath(1.0, np.full((33, 1), 2.0))
    val = weyl_left(g, 0.25, 0.0, 1.0)
    assert val == pytest.approx(2.0 / gamma(0.75), rel=1e-12)


def test_weyl_left_line_matches_adaptive_quadrature():
    a = 0.25
    # oracle: (1/G(1-a)) [1 + a int_0^1 (1-s)^-a ds] by adaptive quadrature
    inner, _ = integrate.quad(lambda s: (1 - s) ** (-a), 0, 1, epsabs=1e-13)
    oracle = (1 + a * inner) / gamma(1 - a)
    assert weyl_left(line(32), a, 0.0, 1.0) == pytest.approx(oracle, rel=1e-4)


def test_weyl_right_constant_and_line():
    c = GridPath(1.0, np.full((17, 1), 5.0))
    assert weyl_right(c, 0.3, 0.0, 1.0) == pytest.approx(0.0, abs=1e-14)
    a, s, b = 0.3, 0.25, 1.0
    inner, _ = integrate.quad(lambda r: -(r - s) / (r - s) ** (2 - a), s, b)
    oracle = (-(b - s) / (b - s) ** (1 - a) + (1 - a) * inner) / gamma(a)
    assert weyl_right(line(64), a, s, b) == pytest.approx(oracle, rel=1e-4)
    assert oracle == pytest.approx(-(b - s) ** a / gamma(1 + a), rel=1e-10)


def test_weyl_errors_on_reversed_interval():
    with pytest.raises(ValueError):
        weyl_left(line(8), 0.3, 0.5, 0.5)
    with pytest.raises(ValueError):
        weyl_right(line(8), 0.3, 0.75, 0.25)


@given(st.integers(0, 10 ** 6), st.floats(0.05, 0.45))
@settings(max_examples=25, deadline=None)
def test_weyl_linearity(seed, alpha):
    r = np.random.default_rng(seed)
    g1 = GridPath(1.0, np.cumsum(r.normal(size=(33, 1)), axis=0))
    g2 = GridPath(1.0, np.cumsum(r.normal(size=(33, 1)), axis=0))
    s = GridPath(1.0, g1.values + g2.values)
    for fn, args in ((weyl_left, (0.25, 1.0)), (weyl_right, (0.0, 0.75))):
        lhs = fn(s, alpha, *args)
        rhs = fn(g1, alpha, *args) + fn(g2, alpha, *args)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


# ----------------------------------------------------------------- Lambda_alpha

def test_lambda_alpha_zero_and_line_bound():
    assert lambda_alpha(GridPath.zeros(1.0, 16), 0.25) == 0.0
    a = 0.25
    lam = lambda_alpha(line(64), a)
    bound = w_one_minus_alpha_norm(line(64), a) / (gamma(1 - a) * gamma(a))
    assert 0 < lam <= bound


@given(st.integers(0, 10 ** 6), st.floats(-4, 4).filter(lambda c: abs(c) > 1e-3))
@settings(max_examples=20, deadline=None)
def test_lambda_alpha_homogeneous_and_bounded(seed, c):
    r = np.random.default_rng(seed)
    h = GridPath(1.0, np.cumsum(r.normal(size=(41, 1)), axis=0) / 6)
    lam = lambda_alpha(h, 0.3)
    assert lambda_alpha(h.with_values(c * h.values), 0.3) == pytest.approx(abs(c) * lam, rel=1e-12)
    assert lam <= w_one_minus_alpha_norm(h, 0.3) / (gamma(0.7) * gamma(0.3)) * (1 + 1e-12)


# --------------------------------------------------------------- Young integral

def test_riemann_stieltjes_examples():
    g = line(4)
    assert riemann_stieltjes_sum(g, g).values[-1, 0] == pytest.approx(0.375)
    h = fbm_path(0.7, 16)
    one = GridPath(1.0, np.ones((17, 1)))
    assert np.allclose(riemann_stieltjes_sum(one, h).values, h.values - h.values[0])
    vals = [riemann_stieltjes_sum(line(M), line(M)).values[-1, 0] for M in (4, 8, 16, 32)]
    assert np.all(np.diff(vals) > 0) and vals[-1] < 0.5
    with pytest.raises(ValueError, match="grid mismatch"):
        riemann_stieltjes_sum(line(4), line(8))


def test_young_constant_integrand():
    h = fbm_path(0.8, 64, seed=3)
    one = GridPath(1.0, np.ones((65, 1)))
    assert np.allclose(young_integral(one, h, 0.3).values, h.values - h.values[0], atol=1e-13)


def test_young_chain_rule_smooth():
    h = GridPath.from_function(lambda t: np.exp(t) + np.sin(3 * t), 1.0, 2 ** 12)
    exact = 0.5 * (h.values[-1, 0] ** 2 - h.values[0, 0] ** 2)
    val = young_integral(h, h, 0.3).values[-1, 0]
    assert abs(val / exact - 1) < 1e-3


def test_young_errors():
    with pytest.raises(ValueError, match="exponent window empty"):
        young_integral(line(8), line(8), 0.5)
    with pytest.raises(ValueError, match="incompatible grids"):
        young_integral(line(8), line(16), 0.3)


def test_young_warns_on_rough_paths():
    r = np.random.default_rng(0)
    w = GridPath(1.0, np.cumsum(r.normal(size=(257, 1)), axis=0) / 16)
    with pytest.warns(RuntimeWarning, match="Hölder"):
        young_integral(w, w, 0.3)


def test_young_smooth_convergence_order():
    ex = 0.5 * np.e * (np.sin(1) - np.cos(1)) + 0.5
    errs = []
    for M in (64, 256, 1024):
        g = GridPath.from_function(np.sin, 1.0, M)
        h = GridPath.from_function(np.exp, 1.0, M)
        errs.append(abs(young_integral(g, h, 0.3).values[-1, 0] - ex))
    rates = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(4)
    assert np.all(rates > 1.2)


@pytest.mark.slow
def test_young_matches_fine_riemann_stieltjes():
    # oracle: left-point sums on a 4x finer grid of the same fBm pair
    rels = []
    for k in range(4):
        gf, hf = fbm_pair(0.8, 2 ** 14, seed=21, k=k)
        g, h = gf.coarsen(4), hf.coarsen(4)
        val = young_integral(g, h, 0.3).values[-1, 0]
        ref = riemann_stieltjes_sum(gf, hf).values[-1, 0]
        rels.append(abs(val - ref) / (np.abs(g.values).max() * np.abs(h.values).max()))
    assert max(rels) < 1e-2


def test_young_integration_by_parts_fbm():
    for k in range(6):
        g, h = fbm_pair(0.8, 1024, seed=5, k=k)
        a = young_integral(g, h, 0.3).values[-1, 0]
        b = young_integral(h, g, 0.3).values[-1, 0]
        gv, hv = g.values[:, 0], h.values[:, 0]
        err = abs(a + b - (gv[-1] * hv[-1] - gv[0] * hv[0]))
        assert err / (np.abs(gv).max() * np.abs(hv).max()) < 1e-3


@given(st.integers(0, 10 ** 6), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=20, deadline=None)
def test_young_bilinear(seed, a, b):
    r = np.random.default_rng(seed)
    p = [GridPath(1.0, np.cumsum(r.normal(size=(65, 1)), axis=0) / 8) for _ in range(3)]
    g1, g2, h = p
    lhs = young_integral(g1.with_values(a * g1.values + b * g2.values), h, 0.3).values
    rhs = a * young_integral(g1, h, 0.3).values + b * young_integral(g2, h, 0.3).values
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)
    lhs = young_integral(h, g1.with_values(a * g1.values + b * g2.values), 0.3).values
    rhs = a * young_integral(h, g1, 0.3).values + b * young_integral(h, g2, 0.3).values
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def _additivity_gap(M):
    g, h = fbm_pair(0.8, M, seed=3, k=0)
    a = M * 2 // 5
    full = young_integral(g, h, 0.3).values[:, 0]
    tail = young_integral(g.window(a, M), h.window(a, M), 0.3).values[-1, 0]
    return abs(full[-1] - full[a] - tail)


@pytest.mark.xfail(strict=True, reason="the discretised pairing formula is additive only up to "
                   "its quadrature error (about 4e-6 at M=512); see decisions ledger")
def test_young_additivity_exact():
    assert _additivity_gap(512) < 1e-10


def test_young_additivity_gap_shrinks():
    gaps = [_additivity_gap(M) for M in (128, 512)]
    assert gaps[1] < gaps[0] and gaps[1] < 1e-4


def test_young_bound_on_pairs():
    for k in range(6):
        g, h = fbm_pair(0.8, 256, seed=9, k=k)
        val = abs(young_integral(g, h, 0.3).values[-1, 0])
        assert val <= lambda_alpha(h, 0.3) * w_alpha_one_norm(g, 0.3)


def test_young_window_bound():
    g, h = fbm_pair(0.8, 256, seed=10, k=0)
    lam = lambda_alpha(h, 0.3)
    r = np.random.default_rng(1)
    for _ in range(10):
        i, j = sorted(r.choice(257, 2, replace=False))
        gw, hw = g.window(i, j), h.window(i, j)
        val = abs(young_integral(gw, hw, 0.3).values[-1, 0])
        assert val <= lam * w_alpha_one_norm(gw, 0.3, inner_weight=0.3)


def test_smooth_path_norms_finite():
    # a path with a finite C^(alpha+kappa) norm has a finite W^(alpha,inf) norm
    g = fbm_path(0.85, 512, seed=6)
    assert np.isfinite(holder_norm(g, 0.6))
    assert np.isfinite(w_alpha_inf_norm(g, 0.3))


def test_estimate_holder_exponent_line_and_fbm():
    assert estimate_holder_exponent(line(256)) == pytest.approx(1.0, abs=1e-9)
    ests = [estimate_holder_exponent(fbm_path(0.7, 2048, seed=1, k=k)) for k in range(8)]
    assert abs(np.mean(ests) - 0.7) < 0.05
