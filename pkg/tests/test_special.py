import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from minimax_forge.special import (
    FBParams,
    NumericalError,
    bessel_ratio,
    fb_gradient,
    fb_log_constant_and_mean,
    fb_log_constant_and_mean_batch,
    imhof_density_at_one,
    log_bessel_i,
    log_bessel_i_over_xpow,
    log_fb_constant,
    log_vmf_surface_integral,
    saddlepoint_density_at_one,
    solve_saddlepoint,
)


# --- modified Bessel I ------------------------------------------------------


def test_log_bessel_half_integer_closed_form():
    # I_{1/2}(x) = sqrt(2/(pi x)) sinh x
    for x in (0.3, 1.0, 5.0, 40.0, 700.0):
        ref = 0.5 * math.log(2.0 / (math.pi * x)) + x + math.log1p(-math.exp(-2 * x)) - math.log(2.0)
        assert log_bessel_i(0.5, x) == pytest.approx(ref, rel=1e-12)


def test_log_bessel_at_zero():
    assert log_bessel_i(0.0, 0.0) == 0.0
    assert log_bessel_i(3.0, 0.0) == -np.inf


def test_log_bessel_rejects_negative():
    with pytest.raises(ValueError):
        log_bessel_i(-1.0, 1.0)
    with pytest.raises(ValueError):
        log_bessel_i(1.0, -1.0)


def test_log_bessel_accuracy_large_order_and_argument():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    for nu, x in [(200.0, 10.0), (150.0, 1e4), (0.5, 1e4), (30.0, 2000.0)]:
        ref = float(mp.log(mp.besseli(nu, x)))
        assert log_bessel_i(nu, x) == pytest.approx(ref, rel=1e-10)


def test_log_bessel_over_xpow_continuous_at_zero():
    nu = 2.5
    at0 = -nu * math.log(2.0) - math.lgamma(nu + 1.0)
    small = log_bessel_i_over_xpow(nu, np.array([0.0, 1e-12, 1e-9, 1e-7]))
    assert np.allclose(small, at0, atol=1e-10)


# --- Bessel ratio -----------------------------------------------------------


def _ratio_closed_form(half_dim, x):
    """Half-integer closed forms, evaluated in extended precision because the
    sinh/cosh combinations cancel catastrophically at small x in doubles."""
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40

    def one(xx):
        xx = mp.mpf(xx)
        if half_dim == 0.5:  # I_{1/2}/I_{-1/2} = tanh
            return mp.tanh(xx)
        if half_dim == 1.5:  # I_{3/2}/I_{1/2} = coth x - 1/x
            return mp.coth(xx) - 1 / xx
        if half_dim == 2.5:  # I_{5/2}/I_{3/2}
            s, c = mp.sinh(xx), mp.cosh(xx)
            return ((1 + 3 / xx**2) * s - 3 * c / xx) / (c - s / xx)
        raise ValueError

    return np.array([float(one(v)) for v in x])


@pytest.mark.parametrize("half_dim", [0.5, 1.5, 2.5])
def test_bessel_ratio_half_integer_forms(half_dim):
    x = np.linspace(1e-3, 50.0, 1000)
    ref = _ratio_closed_form(half_dim, x)
    got = bessel_ratio(half_dim, x)
    assert np.max(np.abs(got - ref) / ref) < 1e-10


def test_bessel_ratio_zero_and_saturation():
    assert bessel_ratio(5.0, 0.0) == 0.0
    assert bessel_ratio(1.5, 50.0) == pytest.approx(1 / np.tanh(50.0) - 1 / 50.0, rel=1e-12)


def test_bessel_ratio_range_and_monotone():
    x = np.linspace(0.0, 200.0, 1000)
    for half_dim in (1.0, 1.5, 5.0, 15.0):
        r = bessel_ratio(half_dim, x)
        assert np.all(r >= 0.0) and np.all(r < 1.0)
        assert np.all(np.diff(r) >= -1e-13)


@given(st.floats(0.5, 40.0), st.floats(0.0, 1e4))
@settings(max_examples=200, deadline=None)
def test_bessel_ratio_bounds_property(half_dim, gamma):
    r = bessel_ratio(half_dim, gamma)
    assert 0.0 <= r < 1.0


# --- von Mises-Fisher surface integral --------------------------------------


def test_vmf_sphere_area_limit():
    assert log_vmf_surface_integral(3, 0.0) == pytest.approx(math.log(4 * math.pi), abs=1e-12)


def test_vmf_circle_quadrature():
    ref, _ = integrate.quad(lambda t: math.exp(math.cos(t)), 0, 2 * math.pi)
    assert log_vmf_surface_integral(2, 1.0) == pytest.approx(math.log(ref), rel=1e-10)


def test_vmf_d3_closed_form():
    assert log_vmf_surface_integral(3, 1.0) == pytest.approx(
        math.log(4 * math.pi * math.sinh(1.0)), rel=1e-12
    )


# --- quadratic-form density (exact integral) --------------------------------


@pytest.mark.parametrize("d", [2, 4, 6])
def test_density_matches_chi_square(d):
    p = FBParams(np.full(d, 0.5), np.zeros(d))
    assert abs(imhof_density_at_one(p) - stats.chi2.pdf(1.0, d)) < 1e-8


def test_density_noncentral_weighted_vs_mc():
    rng = np.random.default_rng(11)
    a = rng.uniform(0.3, 2.0, 5)
    g = rng.normal(0, 1.0, 5)
    exact = imhof_density_at_one(FBParams(a, g))
    draws = rng.normal(g / (2 * a), np.sqrt(1 / (2 * a)), size=(4_000_000, 5))
    q = np.einsum("ij,ij->i", draws, draws)
    h = 0.02
    mc = np.mean(np.abs(q - 1.0) < h / 2) / h
    se = math.sqrt(mc / (len(q) * h))
    assert abs(exact - mc) < 3 * se + 1e-4


def test_density_rejects_invalid_params():
    with pytest.raises(ValueError):
        FBParams(np.array([1.0, -1.0]), np.zeros(2))
    with pytest.raises(ValueError):
        FBParams(np.ones(3), np.zeros(2))


def test_density_raises_below_cancellation_floor():
    # deep-tail instance where the oscillatory integral is pure noise
    a = np.full(8, 400.0)
    g = np.full(8, 30.0)
    with pytest.raises(NumericalError):
        imhof_density_at_one(FBParams(a, g))


# --- saddlepoint ------------------------------------------------------------


def test_saddle_residual_contract():
    rng = np.random.default_rng(3)
    for _ in range(25):
        d = rng.integers(2, 12)
        p = FBParams(rng.uniform(0.05, 10.0, d), rng.normal(0, 3.0, d))
        s = solve_saddlepoint(p)
        assert abs(s.K1 - 1.0) <= 1e-10
        assert s.t_hat < np.min(p.a)


def test_saddlepoint_chi4_within_5pct():
    p = FBParams(np.full(4, 0.5), np.zeros(4))
    ref = stats.chi2.pdf(1.0, 4)
    assert saddlepoint_density_at_one(p, order=2) == pytest.approx(ref, rel=0.05)


def test_saddlepoint_order2_vs_exact_median():
    rng = np.random.default_rng(17)
    rel = []
    while len(rel) < 100:
        d = rng.integers(2, 11)
        p = FBParams(rng.uniform(0.1, 2.0, d), rng.normal(0, 1.5, d))
        try:
            exact = imhof_density_at_one(p)
        except NumericalError:
            continue  # deep tail: outside the exact integral's reliable regime
        approx = saddlepoint_density_at_one(p, order=2)
        rel.append(abs(approx - exact) / exact)
    assert np.median(rel) < 0.02
    assert np.median(rel) < 0.05  # both-methods consistency bound


def test_saddlepoint_rejects_bad_order():
    with pytest.raises(ValueError):
        saddlepoint_density_at_one(FBParams(np.ones(2), np.zeros(2)), order=3)


# --- Fisher-Bingham constant and mean ---------------------------------------


def _fb_quadrature(p: FBParams):
    """Direct spherical quadrature of C and the mean for d=2, 3."""
    a, g = p.a, p.gamma
    if p.dim == 2:
        def dens(t):
            z = np.array([math.cos(t), math.sin(t)])
            return math.exp(-z @ (a * z) + g @ z)
        C, _ = integrate.quad(dens, 0, 2 * math.pi, limit=200)
        m = [integrate.quad(lambda t: dens(t) * f(t), 0, 2 * math.pi, limit=200)[0] / C
             for f in (math.cos, math.sin)]
        return C, np.array(m)
    def dens3(t, ph):
        z = np.array([math.sin(t) * math.cos(ph), math.sin(t) * math.sin(ph), math.cos(t)])
        return math.exp(-z @ (a * z) + g @ z) * math.sin(t)
    C, _ = integrate.dblquad(dens3, 0, 2 * math.pi, 0, math.pi)
    comps = [
        lambda t, ph: math.sin(t) * math.cos(ph),
        lambda t, ph: math.sin(t) * math.sin(ph),
        lambda t, ph: math.cos(t),
    ]
    m = [integrate.dblquad(lambda t, ph, f=f: dens3(t, ph) * f(t, ph),
                           0, 2 * math.pi, 0, math.pi)[0] / C for f in comps]
    return C, np.array(m)


def test_fb_constant_sphere_limit():
    p = FBParams(np.full(3, 1e-4), np.zeros(3))
    assert log_fb_constant(p) == pytest.approx(math.log(4 * math.pi), rel=1e-3)


def test_fb_constant_unit_circle_identity():
    # on the unit circle with a = (1,1) the quadratic form is identically 1
    p = FBParams(np.ones(2), np.zeros(2))
    assert log_fb_constant(p) == pytest.approx(math.log(2 * math.pi) - 1.0, abs=1e-8)


@pytest.mark.parametrize("d", [2, 3])
def test_fb_constant_vs_quadrature(d):
    rng = np.random.default_rng(23 + d)
    for _ in range(3):
        p = FBParams(rng.uniform(0.2, 3.0, d), rng.normal(0, 1.5, d))
        ref, _ = _fb_quadrature(p)
        assert log_fb_constant(p) == pytest.approx(math.log(ref), rel=1e-6)


def test_fb_gradient_zero_at_symmetric_point():
    p = FBParams(np.array([0.7, 1.3, 2.0]), np.zeros(3))
    assert np.all(fb_gradient(p) == 0.0)


@pytest.mark.parametrize("d", [2, 3])
def test_fb_gradient_vs_quadrature(d):
    rng = np.random.default_rng(31 + d)
    p = FBParams(rng.uniform(0.3, 2.0, d), rng.normal(0, 1.0, d))
    C_ref, mean_ref = _fb_quadrature(p)
    grad = fb_gradient(p)
    assert np.max(np.abs(grad / C_ref - mean_ref)) < 1e-5


def test_fb_mean_reduces_to_circular_shrinkage():
    # equal a and gamma along e1: the mean is the d=2 Bessel ratio along e1
    kappa = 2.3
    p = FBParams(np.ones(2), np.array([kappa, 0.0]))
    _, mean = fb_log_constant_and_mean(p)
    assert mean[0] == pytest.approx(bessel_ratio(1.0, kappa), abs=1e-8)
    assert abs(mean[1]) < 1e-10


def test_fb_mean_norm_at_most_one():
    rng = np.random.default_rng(41)
    for _ in range(5):
        d = rng.integers(2, 8)
        p = FBParams(rng.uniform(0.1, 5.0, d), rng.normal(0, 4.0, d))
        _, mean = fb_log_constant_and_mean(p, method="sp2")
        assert np.linalg.norm(mean) <= 1.0 + 1e-9


# --- batch saddlepoint fast path --------------------------------------------


def test_batch_matches_scalar_saddlepoint():
    rng = np.random.default_rng(53)
    a = rng.uniform(0.05, 8.0, (40, 6))
    g = rng.normal(0, 3.0, (40, 6))
    g[0] = 0.0
    lc, mean = fb_log_constant_and_mean_batch(a, g, order=2)
    for i in range(40):
        lr, mr = fb_log_constant_and_mean(FBParams(a[i], g[i]), method="sp2")
        assert lc[i] == pytest.approx(lr, abs=1e-9)
        assert np.max(np.abs(mean[i] - mr)) < 1e-7


def test_batch_analytic_gradient_vs_finite_differences():
    rng = np.random.default_rng(59)
    a = rng.uniform(0.1, 6.0, (10, 5))
    g = rng.normal(0, 2.0, (10, 5))
    lc, mean = fb_log_constant_and_mean_batch(a, g, order=2)
    h = 1e-6
    for i in range(10):
        for j in range(5):
            gp, gm = g[i].copy(), g[i].copy()
            gp[j] += h
            gm[j] -= h
            up = fb_log_constant_and_mean_batch(a[i][None], gp[None], order=2)[0][0]
            dn = fb_log_constant_and_mean_batch(a[i][None], gm[None], order=2)[0][0]
            assert mean[i, j] == pytest.approx((up - dn) / (2 * h), abs=5e-6)


# --- log-space stress --------------------------------------------------------


def test_no_overflow_at_regression_stress_scale():
    # gamma scales B*sqrt(n)*|X'Y| with B=sqrt(20), n=40, d=20
    rng = np.random.default_rng(61)
    n, d, B = 40, 20, math.sqrt(20.0)
    X = rng.normal(0, 1, (n, d))
    theta = np.zeros(d)
    theta[0] = B
    Y = X @ theta + rng.normal(0, 1, n)
    lam, U = np.linalg.eigh(X.T @ X)
    a = 0.5 * B * B * lam
    g = B * (U.T @ (X.T @ Y))
    lc, mean = fb_log_constant_and_mean_batch(a[None], g[None], order=2)
    assert np.isfinite(lc).all() and np.isfinite(mean).all()
    assert log_bessel_i(d / 2 - 1, 1e4) < np.inf
