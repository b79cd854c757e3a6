"""Local Kriging surrogates with predictive uncertainty.

One ordinary (constant-trend) Kriging model is fitted per objective on the
nearest exactly evaluated neighbours of a query. Inputs and outputs are
standardised over the local sample before fitting, so the correlation
parameters ``theta`` live in standardised units.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import solve_triangular

from .core import ConfidenceBox

THETA_START = 1e-2
THETA_LOWER = 1e-4
THETA_UPPER = 1e1
JITTER_START = 1e-10
JITTER_MAX = 1e-4
DEFAULT_LOCAL_SIZE = 15
DEFAULT_STARTS = 5
MAX_SWEEPS = 100
SCREEN_SWEEPS = 3


class FitError(RuntimeError):
    """The correlation matrix stayed singular up to the largest jitter."""


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_quantile(p: float, tol: float = 1e-12) -> float:
    """Standard normal quantile by bisection on the CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie in (0, 1)")
    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def confidence_radius(sigma, alpha: float):
    """Half-width of the two-sided ``1 - alpha`` interval for noise of scale ``sigma``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if np.any(np.asarray(sigma) < 0):
        raise ValueError("sigma must be non-negative")
    return sigma * _quantile_cached(alpha)


_QUANTILES: dict[float, float] = {}


def _quantile_cached(alpha: float) -> float:
    z = _QUANTILES.get(alpha)
    if z is None:
        z = _QUANTILES[alpha] = normal_quantile(1.0 - alpha / 2.0)
    return z


def knearest(query, archive_x, k: int = DEFAULT_LOCAL_SIZE) -> np.ndarray:
    """Indices of the ``min(k, N)`` archive rows closest to ``query``.

    Ties are broken by insertion order; rows with identical coordinates are
    reported once (the earliest).
    """
    archive_x = np.asarray(archive_x, dtype=float)
    if len(archive_x) == 0:
        raise ValueError("empty archive: the query must be evaluated exactly")
    if k < 1:
        raise ValueError("k must be at least 1")
    dist = np.sum((archive_x - np.asarray(query, dtype=float)) ** 2, axis=1)
    order = np.argsort(dist, kind="stable")
    if len(order) > k:
        # a few extra candidates leave room for dropping duplicates
        order = order[: 2 * k]
    _, first = np.unique(archive_x[order], axis=0, return_index=True)
    return order[np.sort(first)][:k]


@numba.njit(cache=True)
def _cholesky(a):
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= low[j, k] * low[j, k]
        if s <= 0.0:
            return low, False
        ljj = math.sqrt(s)
        low[j, j] = ljj
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= low[i, k] * low[j, k]
            low[i, j] = s / ljj
    return low, True


@numba.njit(cache=True)
def _forward(low, b):
    n = b.shape[0]
    out = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= low[i, k] * out[k]
        out[i] = s / low[i, i]
    return out


@numba.njit(cache=True)
def _correlation(sqdiff, theta):
    n = sqdiff.shape[0]
    r = np.empty((n, n))
    for i in range(n):
        r[i, i] = 1.0
        for j in range(i):
            s = 0.0
            for m in range(theta.shape[0]):
                s += theta[m] * sqdiff[i, j, m]
            v = math.exp(-s)
            r[i, j] = v
            r[j, i] = v
    return r


@numba.njit(cache=True)
def _factor(sqdiff, theta):
    """Cholesky factor of the correlation matrix with escalating jitter."""
    r = _correlation(sqdiff, theta)
    n = r.shape[0]
    jitter = 1e-10
    while jitter <= 1e-4 * (1.0 + 1e-9):
        for i in range(n):
            r[i, i] = 1.0 + jitter
        low, ok = _cholesky(r)
        if ok:
            return low, jitter, True
        jitter *= 10.0
    return r, jitter, False


@numba.njit(cache=True)
def _objective(sqdiff, y, theta):
    """Negative concentrated log-likelihood (up to constants)."""
    low, _, ok = _factor(sqdiff, theta)
    if not ok:
        return np.inf
    n = y.shape[0]
    ones = np.ones(n)
    a = _forward(low, ones)
    b = _forward(low, y)
    beta = np.dot(a, b) / np.dot(a, a)
    res = b - beta * a
    s2 = np.dot(res, res) / n
    logdet = 0.0
    for i in range(n):
        logdet += 2.0 * math.log(low[i, i])
    if s2 <= 0.0:
        return 0.5 * logdet - 1e300
    return 0.5 * n * math.log(s2) + 0.5 * logdet


@numba.njit(cache=True)
def _coordinate_search(sqdiff, y, start, lo, hi, tol, max_sweeps):
    """Cyclic golden-section search over log10(theta) inside [lo, hi]."""
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    p = start.copy()
    best = _objective(sqdiff, y, 10.0 ** p)
    trial = p.copy()
    for _ in range(max_sweeps):
        before = best
        moved = 0.0
        for m in range(p.shape[0]):
            a, b = lo, hi
            c = b - gr * (b - a)
            d = a + gr * (b - a)
            trial[:] = p
            trial[m] = c
            fc = _objective(sqdiff, y, 10.0 ** trial)
            trial[m] = d
            fd = _objective(sqdiff, y, 10.0 ** trial)
            while b - a > tol:
                if fc <= fd:
                    b, d, fd = d, c, fc
                    c = b - gr * (b - a)
                    trial[m] = c
                    fc = _objective(sqdiff, y, 10.0 ** trial)
                else:
                    a, c, fc = c, d, fd
                    d = a + gr * (b - a)
                    trial[m] = d
                    fd = _objective(sqdiff, y, 10.0 ** trial)
            if fc <= fd:
                cand, fcand = c, fc
            else:
                cand, fcand = d, fd
            if fcand < best:
                moved = max(moved, abs(cand - p[m]))
                best = fcand
                p[m] = cand
        if moved < tol or before - best < 1e-6 * (1.0 + abs(best)):
            break
    return p, best


@numba.njit(cache=True)
def _multistart(sqdiff, y, starts, lo, hi, tol, screen_sweeps, max_sweeps):
    """Screen every start with a few sweeps, then polish the best one."""
    best_p = starts[0].copy()
    best_f = np.inf
    for s in range(starts.shape[0]):
        p, f = _coordinate_search(sqdiff, y, starts[s], lo, hi, tol, screen_sweeps)
        if f < best_f:
            best_p, best_f = p, f
    if np.isfinite(best_f):
        best_p, best_f = _coordinate_search(sqdiff, y, best_p, lo, hi, tol, max_sweeps)
    return best_p, best_f


@dataclass(frozen=True)
class KrigingModel:
    """Fitted constant-trend Kriging model for one objective.

    Training inputs and outputs are stored in standardised units together
    with the affine maps back to the original ones.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    theta: np.ndarray
    trend: float
    process_variance: float
    cholesky_factor: np.ndarray
    jitter: float
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float

    @property
    def raw_inputs(self) -> np.ndarray:
        return self.inputs * self.x_scale + self.x_mean

    def correlations(self, query) -> np.ndarray:
        q = (np.asarray(query, dtype=float) - self.x_mean) / self.x_scale
        d2 = (self.inputs - q) ** 2
        r = np.exp(-d2 @ self.theta)
        # a query on a training point sees the same nugget as the diagonal
        r[np.all(d2 == 0.0, axis=1)] += self.jitter
        return r


@dataclass(frozen=True)
class Prediction:
    mean: float
    sigma: float


def _sqdiff(x: np.ndarray) -> np.ndarray:
    return (x[:, None, :] - x[None, :, :]) ** 2


def _dedupe(inputs: np.ndarray, outputs: np.ndarray):
    uniq, inverse = np.unique(inputs, axis=0, return_inverse=True)
    if len(uniq) == len(inputs):
        return inputs, outputs
    inverse = inverse.reshape(-1)
    sums = np.zeros(len(uniq))
    np.add.at(sums, inverse, outputs)
    return uniq, sums / np.bincount(inverse)


def _start_points(n: int, starts: int) -> np.ndarray:
    lo, hi = math.log10(THETA_LOWER), math.log10(THETA_UPPER)
    first = np.full((1, n), math.log10(THETA_START))
    rest = np.random.default_rng(20170410).uniform(lo, hi, (max(starts - 1, 0), n))
    return np.vstack([first, rest])


def fit(inputs, outputs, theta=None, starts: int = DEFAULT_STARTS, tol: float = 1e-2) -> KrigingModel:
    """Fit a constant-trend Kriging model by maximum likelihood.

    ``theta`` skips the likelihood search and uses the given correlation
    parameters. The search starts at 1e-2 per coordinate plus ``starts - 1``
    log-uniform points drawn from a fixed stream, so a fit is a pure function
    of its data.
    """
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(outputs, dtype=float).reshape(-1)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) != len(y):
        raise ValueError("inputs and outputs differ in length")
    if not np.all(np.isfinite(y)):
        raise ValueError("outputs must be finite")
    x, y = _dedupe(x, y)
    if len(x) < 2:
        raise ValueError("need at least two distinct inputs")

    x_mean = x.mean(axis=0)
    x_scale = x.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    y_mean = float(y.mean())
    y_scale = float(y.std())
    if y_scale == 0.0:
        y_scale = 1.0
    xn = (x - x_mean) / x_scale
    yn = (y - y_mean) / y_scale
    sq = _sqdiff(xn)
    n = x.shape[1]

    if theta is None:
        lo, hi = math.log10(THETA_LOWER), math.log10(THETA_UPPER)
        best_p, best_f = _multistart(sq, yn, _start_points(n, starts), lo, hi, tol, SCREEN_SWEEPS, MAX_SWEEPS)
        if not np.isfinite(best_f):
            raise FitError("no admissible correlation parameters")
        theta = 10.0**best_p
    else:
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (n,)).copy()

    low, jitter, ok = _factor(sq, theta)
    if not ok:
        raise FitError("correlation matrix is singular even with maximal jitter")
    ones = np.ones(len(yn))
    a = solve_triangular(low, ones, lower=True)
    b = solve_triangular(low, yn, lower=True)
    beta = float(a @ b / (a @ a))
    res = b - beta * a
    s2 = float(res @ res / len(yn))
    return KrigingModel(xn, yn, theta, beta, s2, low, float(jitter), x_mean, x_scale, y_mean, y_scale)


def predict(model: KrigingModel, query) -> Prediction:
    """Kriging predictor and its standard deviation, including the
    variance contributed by estimating the trend."""
    query = np.asarray(query, dtype=float)
    if query.shape != model.x_mean.shape:
        raise ValueError("query dimension does not match the model")
    r = model.correlations(query)
    low = model.cholesky_factor
    ones = np.ones(len(r))
    a = solve_triangular(low, ones, lower=True)
    rw = solve_triangular(low, r, lower=True)
    res = solve_triangular(low, model.outputs, lower=True) - model.trend * a
    mean = model.trend + rw @ res
    aa = a @ a
    u = 1.0 - a @ rw
    var = model.process_variance * (1.0 - rw @ rw + u * u / aa)
    var = max(var, 0.0)
    return Prediction(
        float(model.y_mean + model.y_scale * mean),
        float(model.y_scale * math.sqrt(var)),
    )


def predict_variance_raw(model: KrigingModel, query) -> float:
    """Unclamped predictive variance in standardised units (diagnostics)."""
    r = model.correlations(query)
    low = model.cholesky_factor
    a = solve_triangular(low, np.ones(len(r)), lower=True)
    rw = solve_triangular(low, r, lower=True)
    u = 1.0 - a @ rw
    return float(model.process_variance * (1.0 - rw @ rw + u * u / (a @ a)))


class LocalSurrogate:
    """Predicts confidence boxes from the nearest evaluated neighbours.

    Models are memoised by their exact training set, which only skips
    recomputation: an unchanged neighbourhood yields the same model.
    """

    def __init__(self, local_size: int = DEFAULT_LOCAL_SIZE, alpha: float = 0.05,
                 starts: int = DEFAULT_STARTS, memo_size: int = 512):
        if local_size < 1:
            raise ValueError("local_size must be at least 1")
        confidence_radius(1.0, alpha)
        self.local_size = local_size
        self.alpha = alpha
        self.starts = starts
        self._memo: OrderedDict = OrderedDict()
        self._memo_size = memo_size
        self.fits = 0

    def _models(self, xs: np.ndarray, fs: np.ndarray):
        key = xs.tobytes() + fs.tobytes()
        models = self._memo.get(key)
        if models is None:
            models = [fit(xs, fs[:, k], starts=self.starts) for k in range(fs.shape[1])]
            self.fits += len(models)
            self._memo[key] = models
            if len(self._memo) > self._memo_size:
                self._memo.popitem(last=False)
        else:
            self._memo.move_to_end(key)
        return models

    def predict_box(self, x, archive_x, archive_f) -> ConfidenceBox:
        """Confidence box for ``x``; raises ``FitError``/``ValueError`` when no
        usable model exists and the caller has to evaluate exactly."""
        idx = np.sort(knearest(x, archive_x, self.local_size))
        xs = np.asarray(archive_x)[idx]
        fs = np.asarray(archive_f)[idx]
        if len(xs) < 2:
            raise FitError("not enough distinct neighbours for a model")
        preds = [predict(m, x) for m in self._models(xs, fs)]
        center = np.array([p.mean for p in preds])
        sigma = np.array([p.sigma for p in preds])
        return ConfidenceBox(center, confidence_radius(sigma, self.alpha))
