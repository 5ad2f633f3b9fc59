import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelmaps.errors import InvalidArgumentError
from kernelmaps.kriging import (
    EmpiricalSemivariogram,
    Semivariogram,
    empirical_semivariogram,
    fit_gaussian_model,
    fit_residual,
    krige,
)

MODEL = Semivariogram(nugget=0.0, sill=2.0, range=0.3)


def synthetic_empirical(model, n=15):
    lags = np.linspace(0.02, 1.0, n)
    counts = np.arange(n, 0, -1) * 10
    return EmpiricalSemivariogram(lags, model(lags), counts)


def test_model_validation():
    assert MODEL(0.0) == 0.0
    assert Semivariogram(0.5, 1.0, 1.0)(1e-9) == pytest.approx(0.5)
    for bad in [(-1, 1, 1), (0, -1, 1), (0, 1, 0), (np.nan, 1, 1)]:
        with pytest.raises(InvalidArgumentError):
            Semivariogram(*bad)


def test_empirical_trivial_cases():
    pts = np.random.default_rng(0).uniform(size=(20, 2))
    emp = empirical_semivariogram(pts, np.full(20, 3.0), n_bins=5)
    assert np.all(emp.gamma == 0)
    two = empirical_semivariogram([[0, 0], [1, 0]], [1.0, 4.0], n_bins=5)
    assert len(two) == 1 and two.gamma[0] == 4.5 and two.counts[0] == 1
    with pytest.raises(InvalidArgumentError):
        empirical_semivariogram([[0, 0]], [1.0])


def test_empirical_brute_force():
    rng = np.random.default_rng(1)
    pts, y = rng.uniform(size=(40, 2)), rng.normal(size=40)
    n_bins, max_lag = 6, 0.8
    emp = empirical_semivariogram(pts, y, n_bins=n_bins, max_lag=max_lag)
    edges = np.linspace(0, max_lag, n_bins + 1)
    sums, sq, cnt = np.zeros(n_bins), np.zeros(n_bins), np.zeros(n_bins, int)
    for i in range(40):
        for j in range(i + 1, 40):
            d = np.linalg.norm(pts[i] - pts[j])
            if d > max_lag:
                continue
            b = max(0, int(np.searchsorted(edges, d, side="left")) - 1)
            b = min(b, n_bins - 1)
            sums[b] += d
            sq[b] += (y[i] - y[j]) ** 2
            cnt[b] += 1
    keep = cnt > 0
    assert np.array_equal(emp.counts, cnt[keep])
    assert np.allclose(emp.lags, sums[keep] / cnt[keep], atol=1e-14)
    assert np.allclose(emp.gamma, sq[keep] / (2 * cnt[keep]), atol=1e-14)


@pytest.mark.parametrize("truth", [MODEL, Semivariogram(0.2, 1.0, 0.15), Semivariogram(0.05, 5.0, 0.6)])
def test_fit_recovers_parameters(truth):
    fit = fit_gaussian_model(synthetic_empirical(truth))
    for name in ("sill", "range"):
        assert getattr(fit, name) == pytest.approx(getattr(truth, name), rel=0.05)
    assert fit.nugget == pytest.approx(truth.nugget, abs=0.05 * truth.sill)


def test_fit_residual_not_worse_than_generator():
    rng = np.random.default_rng(2)
    pts = rng.uniform(size=(80, 2))
    y = np.sin(4 * pts[:, 0]) + 0.1 * rng.normal(size=80)
    emp = empirical_semivariogram(pts, y)
    fit = fit_gaussian_model(emp)
    for guess in [Semivariogram(0.01, 0.5, 0.3), Semivariogram(0.0, 1.0, 0.5), Semivariogram(0.1, 0.3, 0.2)]:
        assert fit_residual(emp, fit) <= fit_residual(emp, guess) + 1e-12


def test_fit_degenerate():
    emp = EmpiricalSemivariogram(np.array([0.1, 0.2, 0.3]), np.zeros(3), np.array([1, 2, 3]))
    with pytest.warns(RuntimeWarning):
        fit = fit_gaussian_model(emp)
    assert fit.degenerate and fit.nugget == 0 and fit.sill == 0
    with pytest.raises(InvalidArgumentError):
        fit_gaussian_model(EmpiricalSemivariogram(np.array([0.1, 0.2]), np.ones(2), np.ones(2)))


def test_fit_deterministic():
    emp = synthetic_empirical(Semivariogram(0.1, 1.0, 0.2))
    assert fit_gaussian_model(emp) == fit_gaussian_model(emp)


def test_exact_interpolation():
    rng = np.random.default_rng(3)
    pts, y = rng.uniform(size=(30, 2)), rng.normal(size=30)
    est, var = krige(pts, y, Semivariogram(0.0, 1.0, 0.1), pts)
    assert np.max(np.abs(est - y)) < 1e-6
    assert np.all(var < 1e-6)


def test_constant_samples():
    rng = np.random.default_rng(4)
    pts = rng.uniform(size=(15, 2))
    q = rng.uniform(size=(10, 2))
    model = Semivariogram(0.1, 1.0, 0.3)
    est, var = krige(pts, np.full(15, 7.5), model, q)
    assert np.allclose(est, 7.5, atol=1e-9)
    est2, var2 = krige(pts, np.full(15, -2.0), model, q)
    assert np.allclose(var, var2, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-100, 100))
def test_weights_sum_and_shift(seed, c):
    rng = np.random.default_rng(seed)
    pts, y = rng.uniform(size=(12, 2)), rng.normal(size=12)
    q = rng.uniform(size=(8, 2))
    model = Semivariogram(0.05, 1.0, 0.25)
    est, _, lam = krige(pts, y, model, q, return_weights=True)
    assert np.allclose(lam.sum(axis=0), 1.0, atol=1e-10)
    shifted, _ = krige(pts, y + c, model, q)
    assert np.allclose(shifted, est + c, atol=1e-8 * max(1.0, abs(c)))


def test_duplicates_averaged():
    pts = np.array([[0.1, 0.1], [0.1, 0.1], [0.9, 0.9], [0.5, 0.2]])
    y = np.array([1.0, 3.0, 5.0, 4.0])
    model = Semivariogram(0.0, 1.0, 0.2)
    est, _ = krige(pts, y, model, [[0.1, 0.1]])
    assert est[0] == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(InvalidArgumentError):
        krige([[0, 0], [0, 0]], [1.0, 2.0], model, [[0.5, 0.5]])


def test_degenerate_model_averages():
    est, var = krige([[0, 0], [1, 1]], [1.0, 3.0], Semivariogram(0, 0, 1.0, degenerate=True), [[0.3, 0.3]])
    assert est[0] == 2.0 and var[0] == 0.0


def test_smooth_field_reconstruction():
    rng = np.random.default_rng(5)
    f = lambda p: 60 + 10 * np.sin(3 * p[:, 0]) * np.cos(2 * p[:, 1])
    pts = rng.uniform(size=(200, 2))
    grid = np.stack(np.meshgrid(np.linspace(0, 1, 30), np.linspace(0, 1, 30)), -1).reshape(-1, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        model = fit_gaussian_model(empirical_semivariogram(pts, f(pts)))
    est, _ = krige(pts, f(pts), model, grid)
    truth = f(grid)
    assert np.sum((est - truth) ** 2) / np.sum(truth**2) < 0.05
