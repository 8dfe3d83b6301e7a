"""Property checks of the linear-model theory behind the controller.

Each check returns a :class:`PropertyReport`; ``run_suite`` runs a chosen
set of them. They back both the ``verify-linear`` CLI command and the
acceptance tests.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from . import linear_oracle as lo
from .data_io import fit_stats
from .lr_control import ControllerConfig, window_size
from .nn_engine import Architecture, DenseNetwork, OptimizerSpec, train
from .numstats import fit_exponential


@dataclass
class PropertyReport:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def random_problem(rng: np.random.Generator, n: int, m: int, s: int, eta_fraction: float = 0.5, noise: float = 0.5):
    """Normalized Gaussian inputs, noisy linear targets, random start."""
    x = rng.standard_normal((s, n))
    x = fit_stats(x).apply(x)
    T_star = rng.standard_normal((m, n))
    y = x @ T_star.T + noise * rng.standard_normal((s, m))
    T0 = rng.standard_normal((m, n))
    prob = lo.LinearProblem(x.T, y.T, T0, 1.0)
    return prob.with_eta(eta_fraction * lo.spectral_bound(prob))


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.seconds = time.perf_counter() - t0
        return rep

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def iterate_equivalence(instances: int = 50, steps: int = 200, seed: int = 0, rtol: float = 1e-8) -> PropertyReport:
    """Trainer's full-batch GD on one identity layer vs. closed-form iterates."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 5))
        s = int(rng.integers(n + 5, 101))
        prob = random_problem(rng, n, m, s, eta_fraction=float(rng.uniform(0.1, 0.99)))
        net = DenseNetwork(Architecture((n, m), output="identity", use_bias=False), prob.T0.ravel())
        ks = list(range(steps + 1))
        ref = lo.closed_form_trajectory(prob, ks)
        # step one iteration at a time so every intermediate iterate is compared
        for k in range(1, steps + 1):
            train(net, prob.X.T, prob.Y.T, OptimizerSpec("sgd"), "mse-halved", iterations=1, eta=prob.eta)
            T = net.params.reshape(m, n)
            err = np.linalg.norm(T - ref[k]) / max(np.linalg.norm(ref[k]), 1e-300)
            worst = max(worst, err)
    ok = worst <= rtol
    return PropertyReport("iterate-equivalence", ok, f"worst relative deviation {worst:.3e} (tol {rtol:g}) over {instances} instances x {steps} steps", data={"worst": worst})


@_timed
def bound_dichotomy(
    seeds: int = 50,
    steps: int = 500,
    converge_multiplier: float = 0.99,
    diverge_multiplier: float = 1.01,
    required: Optional[int] = None,
    seed: int = 0,
) -> PropertyReport:
    """Below the spectral bound ``||T[k] - T_inf||`` decays; above it, it grows."""
    required = seeds - 2 if required is None else required
    conv_ok = 0
    div_ok = 0
    for i in range(seeds):
        rng = np.random.default_rng([seed, i])
        n = int(rng.integers(2, 9))
        m = int(rng.integers(1, 5))
        s = int(rng.integers(n + 5, 101))
        base = random_problem(rng, n, m, s, eta_fraction=1.0)
        T_inf = lo.exact_minimizer(base)
        ks = list(range(steps + 1))

        conv = lo.closed_form_trajectory(base.with_eta(converge_multiplier * base.eta), ks)
        d = np.linalg.norm(conv - T_inf, axis=(1, 2))
        if np.all(np.diff(d) <= 1e-12 * d[0]) and d[-1] < d[0]:
            conv_ok += 1

        div = lo.closed_form_trajectory(base.with_eta(diverge_multiplier * base.eta), ks)
        d = np.linalg.norm(div - T_inf, axis=(1, 2))
        if np.any(d[1:] > d[0]):
            div_ok += 1
    ok = conv_ok >= required and div_ok >= required
    return PropertyReport(
        "bound-dichotomy",
        ok,
        f"converged {conv_ok}/{seeds} at {converge_multiplier:g}x bound, diverged {div_ok}/{seeds} at {diverge_multiplier:g}x bound (need {required})",
        data={"converged": conv_ok, "diverged": div_ok},
    )


@_timed
def exponential_form(
    instances: int = 100, eta_fraction: float = 0.5, min_r2: float = 0.99, required: int = 95, seed: int = 0
) -> PropertyReport:
    """A single exponential fits the exact loss curve over one controller window."""
    rng = np.random.default_rng(seed)
    cfg = ControllerConfig()
    good = 0
    r2s = []
    for _ in range(instances):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(1, 5))
        s = int(rng.integers(n + 5, 101))
        prob = random_problem(rng, n, m, s, eta_fraction=eta_fraction)
        L0 = lo.loss_curve(prob, 0)
        w = window_size(L0, prob.eta, cfg)
        losses = lo.loss_curve(prob, list(range(w + 1)))
        fit = fit_exponential(losses)
        r2 = fit.r_squared(losses)
        r2s.append(r2)
        good += r2 >= min_r2
    ok = good >= required
    return PropertyReport(
        "exponential-form",
        ok,
        f"R^2 >= {min_r2} on {good}/{instances} instances (need {required}); min R^2 {min(r2s):.4f}",
        data={"good": good, "r2": r2s},
    )


@_timed
def expectation_mc(
    replicates: int = 10_000, k: int = 20, n: int = 3, m: int = 2, seed: int = 0, z: float = 3.0
) -> PropertyReport:
    """Monte-Carlo mean of single-sample SGD vs. the closed-form expectation."""
    rng = np.random.default_rng(seed)
    L = rng.standard_normal((n, n))
    sigma = L @ L.T + n * np.eye(n)
    d = np.sqrt(np.diag(sigma))
    sigma = sigma / np.outer(d, d)  # unit variances, like normalized inputs
    chol = np.linalg.cholesky(sigma)
    T_star = rng.standard_normal((m, n))
    T0 = rng.standard_normal((m, n))
    eta = 0.5 * m / float(np.linalg.eigvalsh(sigma)[-1])
    noise = 0.5

    T = np.broadcast_to(T0, (replicates, m, n)).copy()
    for _ in range(k):
        x = rng.standard_normal((replicates, n)) @ chol.T
        y = np.einsum("ij,rj->ri", T_star, x) + noise * rng.standard_normal((replicates, m))
        resid = np.einsum("rij,rj->ri", T, x) - y
        T -= (eta / m) * resid[:, :, None] * x[:, None, :]
    mean = T.mean(axis=0)
    se = T.std(axis=0, ddof=1) / math.sqrt(replicates)
    expected = lo.expected_sgd_iterates(T0, sigma, T_star @ sigma, eta, k)
    zs = np.abs(mean - expected) / se
    ok = bool(np.all(zs <= z))
    return PropertyReport(
        "expectation-mc",
        ok,
        f"max |mean - E[T]| = {zs.max():.2f} standard errors over {m * n} entries ({replicates} replicates, k={k})",
        data={"z": zs.tolist()},
    )


@_timed
def curvature_peak(c_exp: float = math.e, eta: float = 1.0, points: int = 200_001, tol: float = 1e-4) -> PropertyReport:
    """Grid search over the decay rate agrees with the analytic maximizer."""
    lam = np.geomspace(1e-3, 1e3, points)
    el = eta * lam
    t = np.log(math.sqrt(2.0) * c_exp * el) / el
    i = int(np.argmax(t))
    lam_star = lo.curvature_peak_rate(c_exp, eta)
    t_star = lo.max_curvature_peak_time(c_exp) / eta
    err_lam = abs(lam[i] - lam_star) / lam_star
    err_t = abs(t[i] - t_star) / t_star
    ok = err_lam <= tol and err_t <= tol
    return PropertyReport(
        "curvature-peak",
        ok,
        f"grid argmax {lam[i]:.6f} vs analytic {lam_star:.6f} (rel {err_lam:.1e}); peak {t[i]:.6f} vs {t_star:.6f}",
    )


PROPERTIES: Dict[str, Callable[..., PropertyReport]] = {
    "iterate-equivalence": iterate_equivalence,
    "bound-dichotomy": bound_dichotomy,
    "exponential-form": exponential_form,
    "expectation-mc": expectation_mc,
    "curvature-peak": curvature_peak,
}


def run_suite(
    properties: Sequence[str] = tuple(PROPERTIES),
    seeds: Optional[int] = None,
    eta_multiplier: Optional[float] = None,
) -> Dict[str, PropertyReport]:
    """Run the named checks. ``seeds`` scales instance counts; ``eta_multiplier``
    replaces the convergent-side multiplier of the bound check (0.99 by default)."""
    if not properties:
        raise ValueError("no properties requested")
    unknown = [p for p in properties if p not in PROPERTIES]
    if unknown:
        raise ValueError(f"unknown properties: {', '.join(unknown)}")
    out = {}
    for name in properties:
        kwargs = {}
        if name == "bound-dichotomy":
            if seeds is not None:
                kwargs["seeds"] = seeds
            if eta_multiplier is not None:
                kwargs["converge_multiplier"] = eta_multiplier
        elif name in ("iterate-equivalence", "exponential-form") and seeds is not None:
            kwargs["instances"] = seeds
            if name == "exponential-form":
                kwargs["required"] = math.ceil(0.95 * seeds)
        out[name] = PROPERTIES[name](**kwargs)
    return out
