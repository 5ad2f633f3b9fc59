"""
Ordinary kriging with a Gaussian semivariogram, used as a batch baseline.

    gamma(h) = nugget + sill * (1 - exp(-h^2 / range^2)),   gamma(0) = 0
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize_scalar, nnls
from scipy.spatial.distance import cdist, pdist

from kernelmaps.errors import InvalidArgumentError


@dataclass(frozen=True)
class Semivariogram:
    nugget: float
    sill: float
    range: float
    degenerate: bool = False

    def __post_init__(self):
        for name in ("nugget", "sill", "range"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")
        if self.nugget < 0 or self.sill < 0:
            raise InvalidArgumentError("nugget and sill must be non-negative")
        if not self.range > 0:
            raise InvalidArgumentError("range must be positive")

    def __call__(self, h):
        h = np.asarray(h, dtype=np.float64)
        g = self.nugget + self.sill * (1.0 - np.exp(-(h * h) / (self.range**2)))
        return np.where(h > 0, g, 0.0)

    def covariance(self, h):
        """Stationary covariance ``C(h) = nugget + sill - gamma(h)``."""
        return self.nugget + self.sill - self(h)


@dataclass
class EmpiricalSemivariogram:
    lags: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray

    def __len__(self):
        return len(self.lags)


def empirical_semivariogram(points, values, n_bins=15, max_lag=None) -> EmpiricalSemivariogram:
    """
    Method-of-moments semivariogram over equal-width distance bins.

    Bin ``b`` collects the pairs with distance in ``(edge_b, edge_{b+1}]``
    (the first bin also takes distance 0) and reports their mean distance,
    ``sum (y_i - y_j)^2 / (2 N_b)`` and ``N_b``. Empty bins are omitted.
    ``max_lag`` defaults to the largest pairwise distance.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(points) < 2:
        raise InvalidArgumentError("at least two samples are needed")
    if len(points) != len(values):
        raise InvalidArgumentError("points and values differ in length")
    d = pdist(points)
    sq = pdist(values[:, None], metric="sqeuclidean")
    if max_lag is None:
        max_lag = float(d.max())
    if max_lag <= 0:
        max_lag = 1.0
    edges = np.linspace(0.0, max_lag, n_bins + 1)
    sel = d <= max_lag
    d, sq = d[sel], sq[sel]
    which = np.clip(np.searchsorted(edges, d, side="left") - 1, 0, n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    dist_sum = np.bincount(which, weights=d, minlength=n_bins)
    sq_sum = np.bincount(which, weights=sq, minlength=n_bins)
    keep = counts > 0
    return EmpiricalSemivariogram(
        lags=dist_sum[keep] / counts[keep],
        gamma=sq_sum[keep] / (2.0 * counts[keep]),
        counts=counts[keep],
    )


def _wls_given_range(emp, rng):
    # For fixed range the model is linear in (nugget, sill): weighted NNLS.
    sw = np.sqrt(emp.counts.astype(np.float64))
    basis = np.column_stack([np.ones_like(emp.lags), 1.0 - np.exp(-(emp.lags**2) / rng**2)])
    coef, _ = nnls(basis * sw[:, None], emp.gamma * sw)
    resid = basis @ coef - emp.gamma
    return coef, float(np.sum(emp.counts * resid**2))


def fit_residual(emp: EmpiricalSemivariogram, model: Semivariogram) -> float:
    """Count-weighted squared misfit of a model to an empirical semivariogram."""
    pred = model.nugget + model.sill * (1.0 - np.exp(-(emp.lags**2) / model.range**2))
    return float(np.sum(emp.counts * (pred - emp.gamma) ** 2))


def fit_gaussian_model(emp: EmpiricalSemivariogram, n_starts=40) -> Semivariogram:
    """
    Count-weighted least-squares Gaussian semivariogram.

    Nugget and sill are solved exactly (non-negative least squares) for each
    candidate range; the range itself is scanned over a log-spaced grid and
    refined by a bounded scalar search around the best grid points.
    """
    if len(emp) < 3:
        raise InvalidArgumentError("at least three non-empty lag bins are needed")
    if not np.any(emp.gamma > 0):
        warnings.warn("empirical semivariogram is identically zero", RuntimeWarning, stacklevel=2)
        return Semivariogram(0.0, 0.0, float(emp.lags.max()), degenerate=True)

    lo, hi = np.log(emp.lags.min() / 10.0), np.log(emp.lags.max() * 10.0)
    grid = np.linspace(lo, hi, n_starts)
    scores = np.array([_wls_given_range(emp, np.exp(g))[1] for g in grid])
    best = None
    for k in np.argsort(scores)[:3]:
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        res = minimize_scalar(
            lambda g: _wls_given_range(emp, np.exp(g))[1],
            bounds=(a, b), method="bounded", options={"xatol": 1e-10},
        )
        cand = (res.fun, float(np.exp(res.x))) if res.fun <= scores[k] else (scores[k], float(np.exp(grid[k])))
        if best is None or cand[0] < best[0]:
            best = cand
    rng = best[1]
    (nugget, sill), _ = _wls_given_range(emp, rng)
    return Semivariogram(float(nugget), float(sill), rng)


def _dedupe(points, values):
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    sums = np.bincount(inverse, weights=values, minlength=len(uniq))
    counts = np.bincount(inverse, minlength=len(uniq))
    return uniq, sums / counts


def _factor(C, scale):
    jitter = 0.0
    for _ in range(12):
        try:
            return cho_factor(C + jitter * np.eye(len(C)), lower=True, check_finite=False)
        except LinAlgError:
            jitter = 1e-10 * scale if jitter == 0.0 else jitter * 10.0
    raise LinAlgError("kriging covariance is not positive definite even with jitter")


def krige(points, values, model: Semivariogram, query, return_weights=False):
    """
    Ordinary kriging predictions and variances at query points.

    Samples sharing a location are merged by averaging. The bordered system
    (covariance form of the semivariogram system with the unbiasedness row)
    is solved once for all queries.

    Returns ``(estimates, variances)``, plus the ``(n_samples, n_queries)``
    weight matrix over the de-duplicated samples when ``return_weights``.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    query = np.asarray(query, dtype=np.float64).reshape(-1, 2)
    pts, vals = _dedupe(points, values)
    if len(pts) < 2:
        raise InvalidArgumentError("at least two distinct sample locations are needed")

    c0 = model.nugget + model.sill
    if c0 == 0:
        # Degenerate model: no spatial structure, every sample weighs the same.
        lam = np.full((len(pts), len(query)), 1.0 / len(pts))
        out = (lam.T @ vals, np.zeros(len(query)))
        return out + (lam,) if return_weights else out

    C = model.covariance(cdist(pts, pts))
    c = model.covariance(cdist(pts, query))
    factor = _factor(C, c0)
    ones = np.ones(len(pts))
    a = cho_solve(factor, ones)
    b = cho_solve(factor, c)
    mu = (ones @ b - 1.0) / (ones @ a)
    lam = b - np.outer(a, mu)
    est = lam.T @ vals
    var = c0 - np.sum(lam * c, axis=0) - mu
    out = (est, np.maximum(var, 0.0))
    return out + (lam,) if return_weights else out
