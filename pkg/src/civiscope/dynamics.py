"""Daily incivility series, cubic smoothing splines, GCV, and influence diagnostics.

The trend model minimizes sum (y_i - f(x_i))^2 + lambda * int f''(x)^2 dx over
natural cubic splines with a knot at every observation. Day indices are
normalized to [0,1] before penalization so lambda values are comparable across
window lengths; the fixed trend-view default lambda = 0.6 lives on this
normalized axis. The linear system is solved in Reinsch form (banded), and the
smoother diagonal needed for GCV and Cook's distance comes from solving the
same banded system against the penalty factor columns.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solveh_banded

from civiscope.model import Dataset, Dimension, ValidationError


@dataclass(frozen=True)
class DailySeries:
    dates: tuple                 # datetime.date, strictly increasing
    counts: np.ndarray           # non-negative ints, aligned with dates
    dimension: Optional[Dimension] = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if len(self.dates) != counts.shape[0]:
            raise ValidationError("DailySeries: dates and counts must align")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("DailySeries: dates must be strictly increasing")
        if np.any(counts < 0):
            raise ValidationError("DailySeries: negative count")
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return len(self.dates)


def build_daily_series(dataset: Dataset, dimension: Dimension, use_human: bool = False) -> DailySeries:
    """Label-1 post count per UTC day across the study window, zero-filled."""
    n_days = dataset.window.n_days
    if n_days <= 0:
        raise ValidationError("build_daily_series: empty study window")
    counts = np.zeros(n_days)
    for post in dataset.posts:
        if post.is_uncivil(dimension, use_human=use_human):
            counts[dataset.window.day_index(post.timestamp)] += 1
    dates = tuple(dataset.window.day_date(i) for i in range(n_days))
    return DailySeries(dates=dates, counts=counts, dimension=dimension)


@dataclass(frozen=True)
class SplineFit:
    lam: float
    fitted: np.ndarray
    leverages: np.ndarray        # diagonal of the smoother matrix
    rss: float
    edf: float                   # trace of the smoother matrix
    residuals: np.ndarray


def _penalty_factors(x: np.ndarray):
    """Green-Silverman Q (n x (n-2), tridiagonal columns) and R ((n-2) square tridiagonal).

    Returned as dense arrays; window lengths stay in the hundreds so the
    O(n^2) smoother-diagonal pass is cheap.
    """
    n = x.shape[0]
    h = np.diff(x)
    if np.any(h <= 0):
        raise ValidationError("smoothing spline: x must be strictly increasing")
    Q = np.zeros((n, n - 2))
    R = np.zeros((n - 2, n - 2))
    for j in range(1, n - 1):
        c = j - 1
        Q[j - 1, c] = 1.0 / h[j - 1]
        Q[j, c] = -1.0 / h[j - 1] - 1.0 / h[j]
        Q[j + 1, c] = 1.0 / h[j]
        R[c, c] = (h[j - 1] + h[j]) / 3.0
        if j < n - 2:
            R[c, c + 1] = R[c + 1, c] = h[j] / 6.0
    return Q, R


def _banded_upper(M: np.ndarray, bandwidth: int) -> np.ndarray:
    """Pack a symmetric banded matrix into solveh_banded's upper form."""
    m = M.shape[0]
    ab = np.zeros((bandwidth + 1, m))
    for off in range(bandwidth + 1):
        ab[bandwidth - off, off:] = np.diagonal(M, offset=off)
    return ab


def fit_smoothing_spline(series: DailySeries, lam: float) -> SplineFit:
    """Natural cubic smoothing spline in Reinsch form.

    Solves (R + lam * Q^T Q) gamma = Q^T y banded, giving fitted values
    y - lam * Q gamma; the smoother diagonal and trace follow from the same
    factorization applied to the columns of Q^T.
    """
    if lam <= 0:
        raise ValidationError("fit_smoothing_spline: lambda must be > 0")
    y = np.asarray(series.counts, dtype=float)
    n = y.shape[0]
    if n < 4:
        raise ValidationError("fit_smoothing_spline: need at least 4 days")

    days = np.array([(d - series.dates[0]).days for d in series.dates], dtype=float)
    x = days / days[-1]

    Q, R = _penalty_factors(x)
    M = R + lam * (Q.T @ Q)           # pentadiagonal, symmetric positive definite
    ab = _banded_upper(M, bandwidth=2)

    rhs = np.column_stack([Q.T @ y, Q.T])
    sol = solveh_banded(ab, rhs)
    gamma = sol[:, 0]
    Z = sol[:, 1:]                    # (n-2) x n, equals M^{-1} Q^T

    fitted = y - lam * (Q @ gamma)
    # diag(S) = 1 - lam * diag(Q M^{-1} Q^T)
    leverages = 1.0 - lam * np.einsum("ij,ji->i", Q, Z)
    residuals = y - fitted
    rss = float(residuals @ residuals)
    edf = float(np.sum(leverages))
    return SplineFit(lam=float(lam), fitted=fitted, leverages=leverages, rss=rss,
                     edf=edf, residuals=residuals)


DEFAULT_GCV_GRID = tuple(np.logspace(-6, 3, 40))


@dataclass(frozen=True)
class GcvSelection:
    lambda_star: float
    curve: tuple                 # (lambda, gcv) in grid order, skipped entries omitted
    skipped: tuple


def select_lambda_gcv(series: DailySeries, grid: Optional[Sequence[float]] = None) -> GcvSelection:
    """Pick lambda minimizing GCV(lambda) = n * RSS / (n - edf)^2 over the grid."""
    grid = list(DEFAULT_GCV_GRID if grid is None else grid)
    if len(grid) < 2:
        raise ValidationError("select_lambda_gcv: grid needs at least 2 values")
    if any(lam <= 0 for lam in grid):
        raise ValidationError("select_lambda_gcv: grid values must be > 0")
    n = len(series)
    curve = []
    skipped = []
    for lam in grid:
        fit = fit_smoothing_spline(series, lam)
        denom = n - fit.edf
        if denom <= 1e-9:
            warnings.warn(f"GCV: lambda={lam:g} gives edf ~ n, skipped")
            skipped.append(lam)
            continue
        curve.append((lam, n * fit.rss / denom ** 2))
    if not curve:
        raise ValidationError("select_lambda_gcv: every grid value degenerate")
    lambda_star = min(curve, key=lambda t: t[1])[0]
    return GcvSelection(lambda_star=float(lambda_star), curve=tuple(curve), skipped=tuple(skipped))


def cooks_distance(fit: SplineFit) -> np.ndarray:
    """Approximate Cook's distance per day.

    D_i = r_i^2 h_ii / (edf * sigma2 * (1 - h_ii)^2) with sigma2 = rss/(n - edf).
    Days with leverage >= 1 are flagged as infinite influence (D = inf). A
    perfect fit makes every distance 0; "perfect" is judged relative to the
    fitted scale since an exact fit leaves rounding-level residuals behind.
    """
    n = fit.fitted.shape[0]
    if fit.rss <= 1e-18 * max(1.0, float(np.sum(fit.fitted ** 2))):
        return np.zeros(n)
    sigma2 = fit.rss / (n - fit.edf)
    d = np.empty(n)
    for i in range(n):
        h = fit.leverages[i]
        if h >= 1.0:
            d[i] = np.inf
        else:
            d[i] = fit.residuals[i] ** 2 * h / (fit.edf * sigma2 * (1.0 - h) ** 2)
    return d


@dataclass(frozen=True)
class ThresholdRule:
    c: Optional[float] = None    # None -> classical 4/n


@dataclass(frozen=True)
class TopKRule:
    k: int


@dataclass(frozen=True)
class OutlierDate:
    date: object
    distance: float


def detect_outliers(series: DailySeries, fit: SplineFit, rule) -> tuple:
    """Dates whose Cook's distance exceeds the rule, sorted by distance descending."""
    d = cooks_distance(fit)
    order = sorted(range(len(d)), key=lambda i: (-d[i], series.dates[i]))
    if isinstance(rule, ThresholdRule):
        c = 4.0 / len(d) if rule.c is None else rule.c
        chosen = [i for i in order if d[i] > c]
    elif isinstance(rule, TopKRule):
        if rule.k < 0:
            raise ValidationError("detect_outliers: k must be >= 0")
        chosen = order[:rule.k]
    else:
        raise ValidationError(f"detect_outliers: unknown rule {rule!r}")
    return tuple(OutlierDate(date=series.dates[i], distance=float(d[i])) for i in chosen)
