import math
import warnings

import numpy as np
import pytest
import scipy.special as sc
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

import aps_iv.aps as aps_mod
from aps_iv.algorithms import affine_rule, by_group_rule, constant_rule, threshold_rule
from aps_iv.aps import (THREADS_ENV, ApsConfig, ApsResult, UnstandardizedCovariatesWarning,
                        analytic_aps_univariate_threshold, betainc_regularized, cap_fraction,
                        default_draws, half_space_aps, resolve_threads, sample_uniform_ball,
                        simulate_aps)
from aps_iv.core import Dataset, rng_stream, standardize
from aps_iv.errors import ConfigError, DimensionMismatch, DomainError

# Grid fixtures are deliberately not standardized.
pytestmark = pytest.mark.filterwarnings("ignore::aps_iv.aps.UnstandardizedCovariatesWarning")


def _grid_dataset(x, x_disc=None):
    x = np.asarray(x, dtype=float)
    n = len(x)
    return Dataset(y=np.zeros(n), x_cont=x, d=np.zeros(n), z=np.zeros(n), x_disc=x_disc)


# ---------------------------------------------------------------- ball sampling

def test_ball_p1_moments():
    pts = sample_uniform_ball([0.0], 1.0, rng_stream(1, 0), size=100_000)[:, 0]
    n = len(pts)
    assert abs(pts.mean()) < 4 * math.sqrt(1 / 3 / n)
    assert abs(pts.var() - 1 / 3) < 4 * math.sqrt(4 / 45 / n)


def test_ball_p2_inner_disc_fraction():
    pts = sample_uniform_ball([0.0, 0.0], 1.0, rng_stream(2, 0), size=100_000)
    frac = np.mean(np.linalg.norm(pts, axis=1) <= 0.5)
    assert abs(frac - 0.25) < 4 * math.sqrt(0.25 * 0.75 / len(pts))


@pytest.mark.parametrize("p", [3, 5, 12])
def test_ball_radius_law(p):
    # P(|X| <= r) = r**p for the uniform ball
    pts = sample_uniform_ball(np.zeros(p), 1.0, rng_stream(3, p), size=50_000)
    r = 0.85
    frac = np.mean(np.linalg.norm(pts, axis=1) <= r)
    assert abs(frac - r ** p) < 4 * math.sqrt(r ** p * (1 - r ** p) / len(pts))


def test_ball_direction_isotropic():
    pts = sample_uniform_ball(np.zeros(4), 1.0, rng_stream(4, 0), size=50_000)
    # each coordinate has variance 1/(p+2) and no correlation
    cov = np.cov(pts.T)
    assert_allclose(np.diag(cov), 1 / 6, atol=0.01)
    assert np.abs(cov - np.diag(np.diag(cov))).max() < 0.01


@pytest.mark.parametrize("p", [1, 2, 7, 50])
def test_ball_support_is_open(p):
    c = np.linspace(-1, 1, p)
    pts = sample_uniform_ball(c, 0.3, rng_stream(5, p), size=20_000)
    assert np.all(np.linalg.norm(pts - c, axis=1) < 0.3)


def test_ball_single_draw_shape():
    v = sample_uniform_ball([1.0, 2.0], 0.1, rng_stream(0, 0))
    assert v.shape == (2,)
    with pytest.raises(ConfigError):
        sample_uniform_ball([0.0], 0.0, rng_stream(0, 0))


# ---------------------------------------------------------------- simulate_aps

def test_constant_rule_gives_degenerate_ones():
    ds = _grid_dataset(np.linspace(-1, 1, 11))
    res = simulate_aps(ds, constant_rule(1.0), ApsConfig(0.5, 50, 0))
    assert_array_equal(res.values, 1.0)
    assert res.n_nondegenerate == 0


def test_threshold_at_cutoff_is_half():
    S = 10_000
    ds = _grid_dataset([0.0])
    res = simulate_aps(ds, threshold_rule(0.0), ApsConfig(0.2, S, 3))
    assert abs(res.values[0] - 0.5) <= 4 / math.sqrt(S)


def test_univariate_threshold_matches_closed_form():
    S, delta, c = 4000, 0.25, 0.3
    x = np.linspace(c - 2 * delta, c + 2 * delta, 61)
    res = simulate_aps(_grid_dataset(x), threshold_rule(c), ApsConfig(delta, S, 11))
    exact = analytic_aps_univariate_threshold(x, c, delta)
    assert np.max(np.abs(res.values - exact)) <= 4 / math.sqrt(S)


def test_values_are_multiples_of_one_over_s():
    S = 37
    res = simulate_aps(_grid_dataset(np.linspace(-0.2, 0.2, 25)), threshold_rule(0.0),
                       ApsConfig(0.3, S, 1))
    k = res.values * S
    assert_allclose(k, np.round(k), atol=1e-9)
    assert_array_equal(res.nondegenerate, (res.values > 0) & (res.values < 1))


def test_longer_runs_extend_shorter_ones():
    ds = _grid_dataset(np.column_stack([np.linspace(-0.1, 0.1, 9), np.zeros(9)]))
    rule = affine_rule([{"weights": [1.0, 1.0]}])
    a = simulate_aps(ds, rule, ApsConfig(0.3, 100, 5)).values * 100
    b = simulate_aps(ds, rule, ApsConfig(0.3, 200, 5)).values * 200
    extra = np.round(b - a)
    assert np.all((extra >= 0) & (extra <= 100))


def test_simulate_aps_deterministic_and_thread_independent(monkeypatch):
    r = np.random.default_rng(0)
    ds = _grid_dataset(r.standard_normal((300, 3)))
    rule = affine_rule([{"weights": [1.0, -0.5, 0.2], "offset": 0.1}])
    cfg = ApsConfig(0.4, 64, 9)
    base = simulate_aps(ds, rule, cfg, threads=1).values
    assert_array_equal(simulate_aps(ds, rule, cfg, threads=1).values, base)
    assert_array_equal(simulate_aps(ds, rule, cfg, threads=4).values, base)
    monkeypatch.setattr(aps_mod, "_CHUNK_FLOATS", 1000)
    assert_array_equal(simulate_aps(ds, rule, cfg, threads=3).values, base)
    monkeypatch.setenv(THREADS_ENV, "2")
    assert_array_equal(simulate_aps(ds, rule, cfg).values, base)
    other = simulate_aps(ds, rule, ApsConfig(0.4, 64, 10)).values
    assert not np.array_equal(other, base)


@pytest.mark.parametrize("chunk", [1, 700, 1_000_000])
def test_univariate_draws_follow_row_streams(monkeypatch, chunk):
    # Row i must use stream i however rows are grouped into chunks.
    monkeypatch.setattr(aps_mod, "_CHUNK_FLOATS", chunk)
    x = np.linspace(-0.05, 0.05, 7)
    S, delta, seed = 300, 0.1, 4
    got = simulate_aps(_grid_dataset(x), threshold_rule(0.0), ApsConfig(delta, S, seed)).values
    want = [np.mean(xi + delta * (2 * rng_stream(seed, i).random(S) - 1) >= 0)
            for i, xi in enumerate(x)]
    assert_allclose(got, want, atol=1.5 / S)


def test_observation_draws_do_not_depend_on_neighbours():
    x = np.array([[0.05], [0.3], [-0.02]])
    rule = threshold_rule(0.0)
    cfg = ApsConfig(0.1, 500, 2)
    full = simulate_aps(_grid_dataset(x), rule, cfg).values
    first = simulate_aps(_grid_dataset(x[:1]), rule, cfg).values
    assert full[0] == first[0]


def test_dimension_mismatch():
    ds = _grid_dataset(np.zeros((3, 2)))
    with pytest.raises(DimensionMismatch):
        simulate_aps(ds, threshold_rule(0.0), ApsConfig(0.1, 10))


def test_warns_on_unstandardized_data():
    ds = _grid_dataset(np.linspace(100, 200, 20))
    with pytest.warns(UnstandardizedCovariatesWarning):
        simulate_aps(ds, threshold_rule(150.0), ApsConfig(0.1, 10))
    std, _ = standardize(ds)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        simulate_aps(std, threshold_rule(150.0), ApsConfig(0.1, 10))


def test_perturbation_happens_in_standardized_units():
    raw = np.array([10.0, 20.0, 30.0, 40.0, 50.0])
    std, smap = standardize(_grid_dataset(raw))
    delta, S = 0.5, 20_000
    res = simulate_aps(std, threshold_rule(33.0), ApsConfig(delta, S, 4))
    c_std = (33.0 - smap.means[0]) / smap.stddevs[0]
    exact = analytic_aps_univariate_threshold(std.x_cont[:, 0], c_std, delta)
    assert np.max(np.abs(res.values - exact)) <= 4 / math.sqrt(S)


def test_discrete_covariates_held_fixed():
    x = np.zeros((4, 1))
    g = np.array([[0], [1], [0], [1]])
    rule = by_group_rule({0: constant_rule(0.2), 1: constant_rule(0.9)}, index=0, p_disc=1)
    res = simulate_aps(_grid_dataset(x, g), rule, ApsConfig(1.0, 50))
    assert_allclose(res.values, [0.2, 0.9, 0.2, 0.9])


@pytest.mark.parametrize("p", [1, 2, 4])
def test_half_space_rule_matches_cap_fraction(p):
    S, delta = 4000, 0.5
    w = np.linspace(1.0, 2.0, p)
    w_unit = w / np.linalg.norm(w)
    dist = np.linspace(-0.6, 0.6, 41)
    x = dist[:, None] * w_unit[None, :]
    rule = affine_rule([{"weights": list(w), "offset": 0.0}])
    res = simulate_aps(_grid_dataset(x), rule, ApsConfig(delta, S, p))
    exact = rule.analytic_aps_fixed(x, delta)
    assert np.max(np.abs(res.values - exact)) <= 4 / math.sqrt(S)
    # nondegenerate rows sit within delta of the boundary
    assert np.all(np.abs(dist[res.nondegenerate]) < delta)


def test_from_values_validation():
    res = ApsResult.from_values([0.0, 0.5, 1.0])
    assert res.nondegenerate.tolist() == [False, True, False]
    with pytest.raises(ConfigError):
        ApsResult.from_values([1.5])


def test_config_validation():
    for bad in ({"delta": 0, "draws": 5}, {"delta": 0.1, "draws": 0},
                {"delta": 0.1, "draws": 2.5}, {"delta": 0.1, "draws": 5, "seed": -1},
                {"delta": float("inf"), "draws": 5}):
        with pytest.raises(ConfigError):
            ApsConfig(**bad)


def test_default_draws():
    assert default_draws(10) == 1000
    assert default_draws(10 ** 6) == math.ceil(10 ** 3.6)


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert resolve_threads() == 3
    monkeypatch.setenv(THREADS_ENV, "0")
    assert resolve_threads() >= 1
    monkeypatch.setenv(THREADS_ENV, "x")
    with pytest.raises(ConfigError):
        resolve_threads()


# ---------------------------------------------------------------- analytic oracles

def test_univariate_closed_form_points():
    assert analytic_aps_univariate_threshold(1.0, 1.0, 0.2) == 0.5
    assert analytic_aps_univariate_threshold(1.25, 1.0, 0.2) == 1.0
    assert analytic_aps_univariate_threshold(0.6, 1.0, 0.2) == 0.0
    assert analytic_aps_univariate_threshold(1.1, 1.0, 0.2) == pytest.approx(0.75)


@pytest.mark.parametrize("p", [1, 2, 3, 10, 50])
def test_cap_fraction_center(p):
    assert cap_fraction(0.0, p) == pytest.approx(0.5, abs=1e-12)


def test_cap_fraction_p1_is_linear():
    v = np.linspace(-0.99, 0.99, 199)
    assert_allclose(cap_fraction(v, 1), (1 + v) / 2, atol=1e-10)
    assert cap_fraction(0.5, 1) == pytest.approx(0.75, abs=1e-12)
    assert cap_fraction(0.5, 1) == pytest.approx(
        analytic_aps_univariate_threshold(0.5, 0.0, 1.0), abs=1e-12)


def test_cap_fraction_mc_oracle_p3():
    rng = np.random.default_rng(99)
    pts = sample_uniform_ball(np.zeros(3), 1.0, rng_stream(99, 0), size=1_000_000)
    del rng
    mc = np.mean(pts[:, 0] >= -0.3)
    assert abs(cap_fraction(0.3, 3) - mc) < 3e-3


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.999, 0.999), st.integers(1, 60))
def test_cap_fraction_matches_scipy_betainc(v, p):
    tail = 0.5 * sc.betainc((p + 1) / 2, 0.5, 1 - v * v)
    ref = 1 - tail if v >= 0 else tail
    assert cap_fraction(v, p) == pytest.approx(ref, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.999), st.integers(1, 30))
def test_cap_fraction_symmetry_and_monotonicity(v, p):
    assert cap_fraction(v, p) + cap_fraction(-v, p) == pytest.approx(1.0, abs=1e-12)
    assert cap_fraction(v, p) >= 0.5 - 1e-15
    assert cap_fraction(min(v + 1e-3, 0.9999), p) >= cap_fraction(v, p) - 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 80), st.floats(0.05, 80), st.floats(0.0, 1.0))
def test_betainc_matches_scipy(a, b, x):
    assert betainc_regularized(a, b, x) == pytest.approx(sc.betainc(a, b, x), abs=1e-10)


def test_cap_fraction_domain():
    for v in (1.0, -1.0, 1.5, np.nan):
        with pytest.raises(DomainError):
            cap_fraction(v, 3)
    with pytest.raises(DomainError):
        cap_fraction(0.1, 0)


def test_half_space_aps_outside_band():
    out = half_space_aps([-2.0, -1.0, 0.0, 1.0, 2.0], 1.0, 4)
    assert_allclose(out, [0.0, 0.0, 0.5, 1.0, 1.0])
