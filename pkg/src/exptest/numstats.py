"""Statistical and curve-fitting kernel used by the learning-rate controller.

Everything here is a pure function of its inputs: power iteration for the
dominant covariance eigenvalue, the regularized incomplete beta function
(which backs the F and Student-t tails), ordinary least squares, and a
three-parameter exponential fit ``A * exp(-B t) + C`` by variable projection.

Loss segments are always fit against the within-window iteration index
``0, 1, ..., n-1`` unless explicit abscissae are passed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "ConvergenceError",
    "LinearFit",
    "ExponentialFit",
    "TestResult",
    "max_eigenvalue",
    "covariance_operator",
    "regularized_incomplete_beta",
    "f_sf",
    "t_cdf",
    "fit_linear",
    "fit_exponential",
    "f_test_nested",
    "t_test_slope_negative",
]

RATE_BOUNDS = (1e-8, 10.0)
RATE_GRID_POINTS = 64
RATE_REL_WIDTH = 1e-6

_BETA_EPS = 1e-16
_BETA_TINY = 1e-300
_BETA_MAX_ITERS = 100_000


class ConvergenceError(RuntimeError):
    """Raised when an iterative routine exhausts its iteration budget."""

    def __init__(self, message: str, last_value: float = float("nan")):
        super().__init__(message)
        self.last_value = last_value


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    sse: float
    slope_stderr: float
    n: int

    def predict(self, t) -> np.ndarray:
        return self.slope * np.asarray(t, dtype=float) + self.intercept


@dataclass(frozen=True)
class ExponentialFit:
    """Least-squares fit of ``amplitude * exp(-rate * t) + offset``."""

    amplitude: float
    rate: float
    offset: float
    sse: float
    degenerate: bool
    n: int = 0

    def predict(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.exp(-self.rate * t) + self.offset

    def r_squared(self, y) -> float:
        y = np.asarray(y, dtype=float)
        sst = float(np.sum((y - y.mean()) ** 2))
        if sst == 0.0:
            return 1.0 if self.sse == 0.0 else 0.0
        return 1.0 - self.sse / sst


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    dof: Union[float, Tuple[float, float]]

    __test__ = False  # keep pytest from collecting this as a test class


# --------------------------------------------------------------------------
# Dominant eigenvalue
# --------------------------------------------------------------------------


def max_eigenvalue(
    gram_apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = 1e-6,
    max_iters: int = 10_000,
) -> float:
    """Dominant eigenvalue of a symmetric PSD operator by power iteration.

    The start vector is the normalized all-ones vector, so the result is
    deterministic. Iteration stops once the eigen-residual
    ``||A v - rho v||`` drops below ``tol * rho``; the Rayleigh quotient
    error is then second order in that residual.

    Raises ConvergenceError (carrying the last Rayleigh quotient) when
    ``max_iters`` is exhausted.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    v = np.full(dim, 1.0 / math.sqrt(dim))
    rho = 0.0
    restarted = False
    for _ in range(max_iters):
        w = np.asarray(gram_apply(v), dtype=float).reshape(dim)
        rho = float(v @ w)
        resid = float(np.linalg.norm(w - rho * v))
        if resid <= tol * abs(rho):
            return rho
        norm = float(np.linalg.norm(w))
        if norm == 0.0 or resid <= 1e-300:
            if not restarted and dim > 1:
                # all-ones start annihilated: retry from a fixed alternating ramp
                v = np.where(np.arange(dim) % 2 == 0, 1.0, -1.0) * np.arange(1, dim + 1)
                v /= np.linalg.norm(v)
                restarted = True
                continue
            return rho
        v = w / norm
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations "
        f"(last Rayleigh quotient {rho!r})",
        last_value=rho,
    )


def covariance_operator(X: np.ndarray, center: bool = True) -> Callable[[np.ndarray], np.ndarray]:
    """Matrix-vector product with the sample covariance of the rows of ``X``.

    ``X`` has one sample per row. Normalization is ``1/(s-1)``. When the
    feature dimension is small relative to the sample count, the covariance
    is formed once in a single pass; otherwise products stay matrix-free.
    """
    X = np.asarray(X, dtype=float)
    s, n = X.shape
    if s < 2:
        raise ValueError("need at least two samples")
    mu = X.mean(axis=0) if center else np.zeros(n)
    if n * n <= X.size:
        cov = (X.T @ X - s * np.outer(mu, mu)) / (s - 1)
        cov = 0.5 * (cov + cov.T)
        return lambda v: cov @ v

    def apply(v):
        return (X.T @ (X @ v) - s * mu * (mu @ v)) / (s - 1)

    return apply


# --------------------------------------------------------------------------
# Special functions
# --------------------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_TINY:
        d = _BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITERS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ConvergenceError(f"incomplete beta continued fraction failed for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    a = float(a)
    b = float(b)
    x = float(x)
    if not (a > 0.0 and b > 0.0):
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return min(1.0, front * _betacf(a, b, x) / a)
    return max(0.0, 1.0 - front * _betacf(b, a, 1.0 - x) / b)


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f) of the F(d1, d2) distribution."""
    if f <= 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return regularized_incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f))


def t_cdf(t: float, dof: float) -> float:
    """Lower tail P(T <= t) of Student's t with ``dof`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    tail = 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t))
    return tail if t < 0 else 1.0 - tail


# --------------------------------------------------------------------------
# Fits
# --------------------------------------------------------------------------


def _as_segment(trace, t) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(trace, dtype=float).ravel()
    if t is None:
        x = np.arange(y.size, dtype=float)
    else:
        x = np.asarray(t, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError("abscissae and losses differ in length")
    return x, y


def fit_linear(trace: Sequence[float], t: Optional[Sequence[float]] = None) -> LinearFit:
    """Closed-form ordinary least squares of loss against iteration index."""
    x, y = _as_segment(trace, t)
    n = y.size
    if n < 3:
        raise ValueError(f"linear fit needs at least 3 points, got {n}")
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("all abscissae identical")
    slope = float(dx @ (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    sse = float(resid @ resid)
    stderr = math.sqrt(sse / (n - 2) / sxx)
    return LinearFit(slope=slope, intercept=float(intercept), sse=sse, slope_stderr=stderr, n=n)


def _project(x: np.ndarray, y: np.ndarray, rate: float) -> Tuple[float, float, float]:
    """Best (amplitude, offset, sse) for a fixed rate.

    Solved in the basis {1, (1 - exp(-rate x)) / rate}, which spans the same
    space as {1, exp(-rate x)} but tends smoothly to {1, x} as rate -> 0,
    so near-linear segments stay well conditioned.
    """
    phi = -np.expm1(-rate * x) / rate
    pm = phi.mean()
    dp = phi - pm
    spp = float(dp @ dp)
    ym = y.mean()
    if spp == 0.0:
        resid = y - ym
        return 0.0, float(ym), float(resid @ resid)
    k = float(dp @ (y - ym)) / spp
    c0 = ym - k * pm
    resid = y - c0 - k * phi
    return -k / rate, float(c0 + k / rate), float(resid @ resid)


def fit_exponential(
    trace: Sequence[float],
    t: Optional[Sequence[float]] = None,
    bounds: Tuple[float, float] = RATE_BOUNDS,
    grid_points: int = RATE_GRID_POINTS,
    rel_width: float = RATE_REL_WIDTH,
) -> ExponentialFit:
    """Fit ``A exp(-B t) + C`` by variable projection over the rate B.

    For each candidate B the pair (A, C) is a linear least-squares solve.
    B is located by a log-spaced grid scan over ``bounds`` and refined by
    golden-section search (in log B) around the best grid point until the
    bracket's relative width is below ``rel_width``. The returned fit never
    has a larger sse than any grid candidate. ``degenerate`` is set when the
    rate ends up pinned at a search boundary or the series is constant.
    """
    x, y = _as_segment(trace, t)
    n = y.size
    if n < 4:
        raise ValueError(f"exponential fit needs at least 4 points, got {n}")
    lo_b, hi_b = bounds

    if np.all(y == y[0]):
        return ExponentialFit(amplitude=0.0, rate=lo_b, offset=float(y[0]), sse=0.0, degenerate=True, n=n)

    grid = np.geomspace(lo_b, hi_b, grid_points)
    best = None  # (sse, rate, amplitude, offset)
    sses = np.empty(grid_points)
    for i, rate in enumerate(grid):
        amp, off, sse = _project(x, y, rate)
        sses[i] = sse
        if best is None or sse < best[0]:
            best = (sse, rate, amp, off)
    i = int(np.argmin(sses))

    a = math.log(grid[max(i - 1, 0)])
    b = math.log(grid[min(i + 1, grid_points - 1)])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    cache = {}

    def evaluate(logb):
        if logb not in cache:
            rate = math.exp(logb)
            cache[logb] = (rate,) + _project(x, y, rate)
        return cache[logb]

    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = evaluate(c)[3]
    fd = evaluate(d)[3]
    while (b - a) > rel_width:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = evaluate(c)[3]
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = evaluate(d)[3]
    for rate, amp, off, sse in cache.values():
        if sse < best[0]:
            best = (sse, rate, amp, off)

    sse, rate, amp, off = best
    pinned = abs(math.log(rate / lo_b)) <= 10 * rel_width or abs(math.log(hi_b / rate)) <= 10 * rel_width
    return ExponentialFit(amplitude=float(amp), rate=float(rate), offset=float(off), sse=float(sse), degenerate=bool(pinned), n=n)


# --------------------------------------------------------------------------
# Tests
# --------------------------------------------------------------------------


def f_test_nested(sse_lin: float, sse_exp: float, n: int) -> TestResult:
    """Extra-sum-of-squares F test of the exponential fit against the line.

    Degrees of freedom are (1, n - 3): the line has two parameters, the
    exponential three. The families are not strictly nested, so a negative
    statistic (exponential worse than the line) is clamped to 0, giving p = 1.
    """
    if n < 5:
        raise ValueError(f"F test needs n >= 5, got {n}")
    dof = (1.0, float(n - 3))
    if sse_exp <= 0.0:
        if sse_lin > 0.0:
            return TestResult(statistic=math.inf, p_value=0.0, dof=dof)
        return TestResult(statistic=0.0, p_value=1.0, dof=dof)
    f = max(0.0, (sse_lin - sse_exp) / (sse_exp / (n - 3)))
    return TestResult(statistic=f, p_value=f_sf(f, *dof), dof=dof)


def t_test_slope_negative(fit: LinearFit) -> TestResult:
    """One-tailed test that the fitted slope is below zero (lower tail)."""
    dof = float(fit.n - 2)
    if fit.slope_stderr <= 0.0:
        if fit.slope < 0.0:
            return TestResult(statistic=-math.inf, p_value=0.0, dof=dof)
        return TestResult(statistic=0.0 if fit.slope == 0.0 else math.inf, p_value=1.0, dof=dof)
    stat = fit.slope / fit.slope_stderr
    return TestResult(statistic=stat, p_value=t_cdf(stat, dof), dof=dof)
