import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.regression.linear_model import yule_walker as sm_yule_walker
from statsmodels.tsa.stattools import acf as sm_acf

from conftest import simulate_ar1
from mcmc_gridbench.act import (
    ActEstimate,
    ActOptions,
    ArFit,
    Method,
    SeriesView,
    Status,
    act_ci,
    act_ics,
    act_point,
    ar_to_acf,
    characteristic_roots,
    default_p_max,
    estimate_act,
    initial_convex_sequence,
    is_stationary,
    sample_acf,
    select_order,
    yule_walker,
)
from mcmc_gridbench.errors import BadLag, Degenerate, SingularToeplitz, ZeroVariance


def direct_acf(x, max_lag, mean=None):
    x = np.asarray(x, dtype=float)
    n = x.size
    m = x.mean() if mean is None else mean
    d = x - m
    s2 = sum(v * v for v in d) / n
    return np.array([sum(d[i] * d[i + k] for i in range(n - k)) / (n * s2) for k in range(1, max_lag + 1)])


# sample_acf


def test_acf_alternating_known_mean():
    acf = sample_acf(SeriesView([1.0, -1.0, 1.0, -1.0], known_mean=0.0), 1)
    assert acf[0] == pytest.approx(-0.75, abs=1e-15)


def test_acf_constant_raises():
    with pytest.raises(ZeroVariance):
        sample_acf(SeriesView([5.0, 5.0, 5.0, 5.0]), 1)


@pytest.mark.parametrize("lag", [0, 4, -1])
def test_acf_bad_lag(lag):
    with pytest.raises(BadLag):
        sample_acf(SeriesView([1.0, 2.0, 3.0, 5.0]), lag)


def test_series_rejects_nonfinite():
    with pytest.raises(ValueError):
        SeriesView([1.0, math.nan, 2.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=60), st.integers(1, 4), st.booleans())
def test_acf_matches_direct_sum(values, lag, known):
    x = np.asarray(values)
    mean = 0.25 if known else None
    dev = x - (x.mean() if mean is None else mean)
    if np.dot(dev, dev) < 1e-6:
        return
    got = sample_acf(SeriesView(x, known_mean=mean), lag)
    np.testing.assert_allclose(got, direct_acf(x, lag, mean), rtol=1e-9, atol=1e-9)


def test_acf_matches_statsmodels_long_lags():
    # long series and lags beyond the direct-sum cutoff exercise the FFT path
    x = simulate_ar1(0.7, 5000, np.random.default_rng(3))
    got = sample_acf(SeriesView(x), 120)
    np.testing.assert_allclose(got, sm_acf(x, nlags=120, fft=False)[1:], rtol=1e-10, atol=1e-12)


def test_white_noise_acf_small():
    hits = 0
    for seed in range(100):
        x = np.random.default_rng(seed).standard_normal(50_000)
        hits += np.all(np.abs(sample_acf(SeriesView(x), 5)) < 3 / math.sqrt(x.size))
    assert hits >= 99


# yule_walker


def test_yw_order_one():
    fit = yule_walker([0.5], 100)
    np.testing.assert_allclose(fit.coeffs, [0.5])
    assert fit.innovation_ratio == pytest.approx(0.75)
    np.testing.assert_allclose(fit.cov, [[0.75 / 100]])


def test_yw_order_two_hand_solution():
    fit = yule_walker([0.5, 0.25], 1000)
    np.testing.assert_allclose(fit.coeffs, [0.5, 0.0], atol=1e-15)
    # R^-1 for [[1, .5], [.5, 1]] is (4/3) [[1, -.5], [-.5, 1]]
    np.testing.assert_allclose(fit.cov, 0.75 * (4 / 3) * np.array([[1, -0.5], [-0.5, 1]]) / 1000)


def test_yw_perfect_correlation():
    try:
        fit = yule_walker([1.0], 100)
    except SingularToeplitz:
        return
    assert not is_stationary(fit.coeffs)


def test_yw_singular_order_two():
    with pytest.raises(SingularToeplitz):
        yule_walker([1.0, 1.0], 100)


def test_yw_matches_statsmodels():
    x = simulate_ar1(0.6, 20_000, np.random.default_rng(11))
    rho = sample_acf(SeriesView(x), 3)
    ours = yule_walker(rho, x.size).coeffs
    theirs, _ = sm_yule_walker(x, order=3, method="mle", demean=True)
    np.testing.assert_allclose(ours, theirs, rtol=1e-8, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.6, 0.6), min_size=1, max_size=4))
def test_yw_roundtrip_with_theoretical_acf(coeffs):
    pi = np.asarray(coeffs)
    roots = characteristic_roots(pi)
    if not is_stationary(pi) or (roots.size and np.min(np.abs(roots)) < 1.05):
        return
    rho = ar_to_acf(pi, pi.size)
    np.testing.assert_allclose(yule_walker(rho, 1000).coeffs, pi, atol=1e-8)
    np.testing.assert_allclose(ar_to_acf(yule_walker(rho, 1000).coeffs, pi.size), rho, atol=1e-8)


# select_order


def test_default_p_max():
    assert default_p_max(100_000) == 50
    assert default_p_max(1000) == 30
    assert default_p_max(40_000) == 47


def test_select_order_ar1():
    # AIC overfits with a fixed positive probability, so order 1 is the mode, not a certainty
    orders = []
    for seed in range(20):
        x = simulate_ar1(0.9, 100_000, np.random.default_rng(seed))
        fit = select_order(SeriesView(x))
        orders.append(fit.order)
        assert fit.coeffs[0] == pytest.approx(0.9, abs=0.02)
        assert act_point(fit) == pytest.approx(19, rel=0.2)
    assert min(orders) >= 1
    assert orders.count(1) >= 12


def test_select_order_aic_is_minimal():
    x = simulate_ar1(0.5, 2000, np.random.default_rng(5))
    s = SeriesView(x)
    best = select_order(s, p_max=8)
    _, s2 = s.center()
    rho = sample_acf(s, 8)
    aics = [x.size * math.log(s2)]
    for p in range(1, 9):
        f = yule_walker(rho[:p], x.size)
        aics.append(x.size * math.log(s2 * f.innovation_ratio) + 2 * p)
    assert best.order == int(np.argmin(aics))
    assert best.aic == pytest.approx(min(aics))


def test_select_order_degenerate():
    x = np.tile([1.0, 2.0, 3.0], 334)[:1000]
    with pytest.raises(Degenerate):
        select_order(SeriesView(x))


# act_point and stationarity


def _fit(coeffs, acf):
    return ArFit(len(coeffs), np.asarray(coeffs, float), np.asarray(acf, float), np.zeros((len(coeffs),) * 2), 1000,
                 1.0 - float(np.dot(coeffs, acf)))


@pytest.mark.parametrize("pi,expected", [(0.5, 3.0), (0.9, 19.0)])
def test_act_point_ar1(pi, expected):
    assert act_point(_fit([pi], [pi])) == pytest.approx(expected, rel=1e-12)


def test_act_point_white_noise():
    assert act_point(_fit([], [])) == 1.0


@settings(max_examples=30)
@given(st.floats(-0.95, 0.95))
def test_act_point_ar1_closed_form(pi):
    assert act_point(_fit([pi], [pi])) == pytest.approx((1 + pi) / (1 - pi), rel=1e-10)


def test_act_point_zero_coeffs():
    assert act_point(_fit([0.0, 0.0], [0.3, -0.2])) == pytest.approx(1.0 - 0.0)


@pytest.mark.parametrize(
    "coeffs,expected", [([1.0], False), ([0.5], True), ([0.5, 0.6], False), ([-1.0], False), ([0.999], True)]
)
def test_is_stationary(coeffs, expected):
    assert is_stationary(coeffs) is expected


def test_roots_quadratic():
    roots = np.sort_complex(characteristic_roots([0.5, 0.6]))
    np.testing.assert_allclose(roots.real, [(-0.5 - math.sqrt(2.65)) / 1.2, (-0.5 + math.sqrt(2.65)) / 1.2])
    assert abs(roots[1]) == pytest.approx(0.9399, abs=1e-4)


# ar_to_acf


def test_ar_to_acf_examples():
    np.testing.assert_allclose(ar_to_acf([0.5], 3), [0.5, 0.25, 0.125])
    assert ar_to_acf([0.5, 0.25], 1)[0] == pytest.approx(2 / 3)
    np.testing.assert_array_equal(ar_to_acf([], 2), [0.0, 0.0])


def test_ar_to_acf_recursion_ar2():
    rho = ar_to_acf([0.5, 0.25], 6)
    full = np.concatenate(([1.0], rho))
    for k in range(2, 7):
        assert full[k] == pytest.approx(0.5 * full[k - 1] + 0.25 * full[k - 2])


# act_ci


def test_ci_white_noise_fit():
    assert act_ci(_fit([], [])) == (1.0, 1.0)


def test_ci_unbounded_near_unit_root():
    fit = yule_walker([0.999], 200)
    lo, hi = act_ci(fit, rng=np.random.default_rng(0))
    assert hi == math.inf
    assert lo < math.inf


def test_ci_deterministic_given_rng():
    fit = yule_walker([0.5, 0.1], 5000)
    a = act_ci(fit, rng=np.random.default_rng(7))
    b = act_ci(fit, rng=np.random.default_rng(7))
    assert a == b


def test_ci_coverage_ar1_small():
    covered = 0
    for seed in range(60):
        x = simulate_ar1(0.5, 10_000, np.random.default_rng(1000 + seed))
        est = estimate_act(SeriesView(x), ActOptions(seed=seed))
        covered += est.ci_low <= 3.0 <= est.ci_high
    assert covered >= 48


# estimate_act


def test_estimate_constant_chain_degenerate():
    est = estimate_act(SeriesView(np.full(1000, 2.0)))
    assert est.status is Status.DEGENERATE
    assert math.isnan(est.tau)


def test_estimate_nonstationary_random_walk():
    x = np.cumsum(np.random.default_rng(0).standard_normal(20_000))
    est = estimate_act(SeriesView(x))
    assert est.status in (Status.NONSTATIONARY, Status.OK)
    if est.status is Status.NONSTATIONARY:
        assert est.tau == est.ci_high == math.inf
    else:
        assert est.tau > 500


def test_estimate_bracketing_and_ok():
    x = simulate_ar1(0.9, 100_000, np.random.default_rng(2))
    est = estimate_act(SeriesView(x))
    assert est.ok and est.method is Method.AR
    assert est.ci_low <= est.tau <= est.ci_high
    assert est.tau == pytest.approx(19, rel=0.2)


def test_estimate_affine_invariant():
    x = simulate_ar1(0.5, 5000, np.random.default_rng(9))
    a = estimate_act(SeriesView(x), ActOptions(seed=3))
    b = estimate_act(SeriesView(-2.5 * x + 7.0), ActOptions(seed=3))
    assert a.order == b.order
    assert b.tau == pytest.approx(a.tau, rel=1e-9)
    assert b.ci_low == pytest.approx(a.ci_low, rel=1e-9)
    assert b.ci_high == pytest.approx(a.ci_high, rel=1e-9)


def test_estimate_white_noise():
    x = np.random.default_rng(4).standard_normal(50_000)
    est = estimate_act(SeriesView(x))
    assert 0.9 <= est.tau <= 1.1


def test_variance_law_ar1():
    # var(mean) * n / tau approaches var(X) for AR(1)
    phi, n, reps = 0.5, 20_000, 300
    rng = np.random.default_rng(123)
    means = [simulate_ar1(phi, n, rng).mean() for _ in range(reps)]
    var_x = 1.0 / (1 - phi * phi)
    ratio = np.var(means, ddof=1) * n / 3.0 / var_x
    assert 0.8 < ratio < 1.2


# initial convex sequence


def lower_hull(points):
    """Greatest convex minorant evaluated at the x-coordinates of ``points``."""
    hull = []
    for p in points:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (p[0] - x1) >= (p[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)
    xs = [h[0] for h in hull]
    ys = [h[1] for h in hull]
    return np.interp([p[0] for p in points], xs, ys)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 2.0), min_size=1, max_size=25))
def test_ics_convexification_matches_hull(values):
    g = np.asarray(values)
    g_mono = np.minimum.accumulate(g)
    expected = lower_hull(list(enumerate(g_mono)))
    got = initial_convex_sequence(g)
    np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-12)
    assert np.all(np.diff(got) <= 1e-12)
    assert np.all(np.diff(got, 2) >= -1e-12)


def test_ics_truncates_at_first_nonpositive():
    g = np.array([1.0, 0.5, -0.1, 0.4])
    np.testing.assert_allclose(initial_convex_sequence(g), [1.0, 0.5])


def test_ics_white_noise():
    x = np.random.default_rng(8).standard_normal(50_000)
    assert 0.8 <= act_ics(SeriesView(x)).tau <= 1.2


def test_ics_ar1():
    hits = 0
    for seed in range(10):
        x = simulate_ar1(0.5, 100_000, np.random.default_rng(seed))
        hits += abs(act_ics(SeriesView(x)).tau - 3) <= 0.45
    assert hits >= 9
    x = simulate_ar1(0.9, 100_000, np.random.default_rng(99))
    assert act_ics(SeriesView(x)).tau == pytest.approx(19, rel=0.2)


def test_ics_estimate_shape():
    x = simulate_ar1(0.5, 1000, np.random.default_rng(1))
    est = act_ics(SeriesView(x))
    assert est.method is Method.ICS and est.status is Status.OK
    assert est.ci_low == est.tau == est.ci_high


def test_ics_constant_degenerate():
    assert act_ics(SeriesView(np.ones(50))).status is Status.DEGENERATE


def test_degenerate_constructor():
    e = ActEstimate.degenerate()
    assert e.status is Status.DEGENERATE and not e.ok
