"""Closed-form gradient-descent dynamics of a single linear layer.

Matrices follow the column convention of the underlying derivation: inputs
``X`` are ``n x s`` (one sample per column), targets ``Y`` are ``m x s`` and
weights ``T`` are ``m x n``. The loss is ``||T X - Y||_F^2 / (2 m s)`` and
one full-batch step is ``T <- T A + B`` with ``A = I - eta/(m s) X X^T``.

These functions are the ground truth the iterative trainer and the
controller's premises are checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "LinearProblem",
    "ExpMixture",
    "RankDeficientError",
    "exact_minimizer",
    "gradient",
    "iteration_matrix",
    "spectral_bound",
    "closed_form_iterates",
    "iterate_gd",
    "expected_sgd_iterates",
    "loss_curve",
    "loss_mixture",
    "taylor_collapse",
    "dominant_term",
    "curvature_peak_time",
    "curvature_peak_rate",
    "max_curvature_peak_time",
]


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass
class LinearProblem:
    X: np.ndarray
    Y: np.ndarray
    T0: np.ndarray
    eta: float

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        self.T0 = np.atleast_2d(np.asarray(self.T0, dtype=float))
        n, s = self.X.shape
        if self.Y.shape[1] != s:
            raise ValueError("X and Y must have the same number of columns")
        if self.T0.shape != (self.Y.shape[0], n):
            raise ValueError(f"T0 must be {self.Y.shape[0]}x{n}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.Y.shape[0]

    @property
    def s(self) -> int:
        return self.X.shape[1]

    def with_eta(self, eta: float) -> "LinearProblem":
        return LinearProblem(self.X, self.Y, self.T0, eta)


@dataclass
class ExpMixture:
    """``offset + sum_i A_i exp(-a_i t)``."""

    terms: List[Tuple[float, float]] = field(default_factory=list)
    offset: float = 0.0

    def __post_init__(self):
        self.terms = [(float(a), float(r)) for a, r in self.terms]
        if any(r < 0 for _, r in self.terms):
            raise ValueError("rates must be non-negative")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.offset, dtype=float)
        for amp, rate in self.terms:
            out = out + amp * np.exp(-rate * t)
        return out


def _gram(problem: LinearProblem) -> np.ndarray:
    return problem.X @ problem.X.T


def exact_minimizer(problem: LinearProblem) -> np.ndarray:
    """``T_inf = Y X^T (X X^T)^{-1}``."""
    G = _gram(problem)
    rank = np.linalg.matrix_rank(problem.X)
    if rank < problem.n:
        raise RankDeficientError(f"X spans only {rank} of {problem.n} input dimensions ({problem.n - rank} deficient)")
    # solve G T^T = X Y^T instead of forming the inverse
    return np.linalg.solve(G, problem.X @ problem.Y.T).T


def gradient(problem: LinearProblem, T: np.ndarray) -> np.ndarray:
    """Loss gradient ``(T X X^T - Y X^T) / (m s)``."""
    return (T @ _gram(problem) - problem.Y @ problem.X.T) / (problem.m * problem.s)


def iteration_matrix(problem: LinearProblem) -> np.ndarray:
    return np.eye(problem.n) - problem.eta / (problem.m * problem.s) * _gram(problem)


def spectral_bound(problem: LinearProblem) -> float:
    """Largest convergent step ``2 m s / (lambda_max (s - 1))``.

    ``lambda_max`` is the top eigenvalue of ``X X^T / (s - 1)``, which is
    the sample covariance when the inputs are centered.
    """
    lam = float(np.linalg.eigvalsh(_gram(problem) / (problem.s - 1))[-1])
    return 2.0 * problem.m * problem.s / (lam * (problem.s - 1))


def _power_sym(A: np.ndarray, k: int) -> np.ndarray:
    w, P = np.linalg.eigh(A)
    return (P * w**k) @ P.T


def closed_form_iterates(problem: LinearProblem, k: int, T_inf: Optional[np.ndarray] = None) -> np.ndarray:
    """``T[k] = (T0 - T_inf) A^k + T_inf`` with ``A^k`` from an eigendecomposition."""
    if k == 0:
        return problem.T0.copy()
    if T_inf is None:
        T_inf = exact_minimizer(problem)
    return (problem.T0 - T_inf) @ _power_sym(iteration_matrix(problem), k) + T_inf


def closed_form_trajectory(problem: LinearProblem, ks: Sequence[int]) -> np.ndarray:
    """Stack of ``T[k]`` for several ``k`` sharing one eigendecomposition."""
    T_inf = exact_minimizer(problem)
    w, P = np.linalg.eigh(iteration_matrix(problem))
    V = (problem.T0 - T_inf) @ P
    out = np.empty((len(ks),) + problem.T0.shape)
    for i, k in enumerate(ks):
        out[i] = problem.T0 if k == 0 else (V * w**k) @ P.T + T_inf
    return out


def iterate_gd(problem: LinearProblem, steps: int) -> np.ndarray:
    """Plain iterative full-batch gradient descent; returns ``T[0..steps]``."""
    T = problem.T0.copy()
    out = [T.copy()]
    for _ in range(steps):
        T = T - problem.eta * gradient(problem, T)
        out.append(T.copy())
    return np.stack(out)


def expected_sgd_iterates(
    T0: np.ndarray, sigma_xx: np.ndarray, sigma_yx: np.ndarray, eta: float, k: int
) -> np.ndarray:
    """Mean single-sample SGD iterate ``(T0 - T_inf)(I - eta/m Sigma_xx)^k + T_inf``.

    ``sigma_xx = E[x x^T]`` and ``sigma_yx = E[y x^T]`` are population
    second moments; ``T_inf = sigma_yx sigma_xx^{-1}``.
    """
    T0 = np.atleast_2d(np.asarray(T0, dtype=float))
    sigma_xx = np.asarray(sigma_xx, dtype=float)
    sigma_yx = np.atleast_2d(np.asarray(sigma_yx, dtype=float))
    m, n = T0.shape
    if k == 0:
        return T0.copy()
    T_inf = np.linalg.solve(sigma_xx, sigma_yx.T).T
    E_A = np.eye(n) - eta / m * sigma_xx
    return (T0 - T_inf) @ _power_sym(0.5 * (E_A + E_A.T), k) + T_inf


def _loss(problem: LinearProblem, T: np.ndarray) -> float:
    R = T @ problem.X - problem.Y
    return float(np.sum(R * R)) / (2.0 * problem.m * problem.s)


def loss_curve(problem: LinearProblem, k) -> np.ndarray:
    """Exact training loss at ``T[k]``; ``k`` may be a scalar or a sequence."""
    ks = np.atleast_1d(np.asarray(k, dtype=int))
    traj = closed_form_trajectory(problem, ks)
    vals = np.array([_loss(problem, T) for T in traj])
    return vals if np.ndim(k) else float(vals[0])


def loss_mixture(problem: LinearProblem) -> ExpMixture:
    """Loss as ``C_int + sum_i c_i exp(-rate_i k)`` in the iteration index.

    Each eigenmode of ``A`` with eigenvalue ``mu_i`` contributes a term with
    rate ``-log(mu_i^2)``; modes with ``mu_i = 0`` vanish after one step and
    are dropped, so the mixture is exact for ``k >= 1``.
    """
    T_inf = exact_minimizer(problem)
    w, P = np.linalg.eigh(iteration_matrix(problem))
    V = (problem.T0 - T_inf) @ P
    G = P.T @ _gram(problem) @ P  # diagonal up to rounding
    coef = np.sum(V * V, axis=0) * np.diag(G) / (2.0 * problem.m * problem.s)
    offset = _loss(problem, T_inf)
    terms = []
    for c, mu in zip(coef, w):
        if mu == 0.0 or c == 0.0:
            continue
        terms.append((float(c), float(-math.log(mu * mu))))
    bad = [r for _, r in terms if r < 0]
    if bad:
        raise ValueError("step size outside the convergent range; loss modes grow")
    return ExpMixture(terms, offset)


def taylor_collapse(mixture: ExpMixture) -> Tuple[float, float]:
    """Match the first two Taylor terms with a single ``C exp(c t)``.

    Returns ``(sum A_i, sum A_i a_i / sum A_i)`` where ``a_i`` are the
    mixture's rates, so the collapsed term decays as ``C exp(-c t)``.
    """
    total = sum(a for a, _ in mixture.terms)
    if total == 0:
        raise ZeroDivisionError("amplitudes sum to zero; matched rate undefined")
    return total, sum(a * r for a, r in mixture.terms) / total


def dominant_term(mixture: ExpMixture, threshold: float = 2.0) -> Tuple[float, float]:
    """Collapse only the slowest terms: rates within ``threshold`` x the minimum."""
    if not mixture.terms:
        raise ValueError("empty mixture")
    rmin = min(r for _, r in mixture.terms)
    slow = [(a, r) for a, r in mixture.terms if r <= threshold * rmin]
    return taylor_collapse(ExpMixture(slow))


def curvature_peak_time(c_exp: float, eta: float, lam: float) -> float:
    """Time of maximum curvature of ``c_exp * exp(-eta lam t)``.

    Below the region where the log argument exceeds one, the analytic value
    is zero or negative; callers clamp.
    """
    el = eta * lam
    return math.log(math.sqrt(2.0) * c_exp * el) / el


def curvature_peak_rate(c_exp: float, eta: float) -> float:
    """The ``lam`` maximizing :func:`curvature_peak_time`."""
    return math.e / (math.sqrt(2.0) * c_exp * eta)


def max_curvature_peak_time(c_exp: float) -> float:
    """Largest possible curvature-peak time, ``sqrt(2) c_exp / e`` (in units of eta * t)."""
    return math.sqrt(2.0) * c_exp / math.e
