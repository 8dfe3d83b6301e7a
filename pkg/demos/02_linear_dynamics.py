"""Gradient descent on a linear model, in closed form.

Compares iterated full-batch gradient descent against the closed-form
iterates, shows the learning-rate bound separating convergence from
divergence, and checks that one exponential describes the loss curve over
the window the controller would use.

    python demos/02_linear_dynamics.py
"""

import numpy as np

from exptest import linear_oracle as lo
from exptest.lr_control import ControllerConfig, window_size
from exptest.numstats import fit_exponential
from exptest.verify import random_problem

rng = np.random.default_rng(1)
prob = random_problem(rng, n=5, m=2, s=80, eta_fraction=0.5)
T_inf = lo.exact_minimizer(prob)
bound = lo.spectral_bound(prob)
print(f"n={prob.n} m={prob.m} s={prob.s}  bound={bound:.4f}  eta={prob.eta:.4f}")

iterated = lo.iterate_gd(prob, 100)
closed = lo.closed_form_trajectory(prob, range(101))
print(f"max |iterated - closed form| over 100 steps: {np.abs(iterated - closed).max():.2e}")

for frac in (0.99, 1.01):
    traj = lo.closed_form_trajectory(prob.with_eta(frac * bound), [0, 100, 500])
    dist = np.linalg.norm(traj - T_inf, axis=(1, 2))
    print(f"eta = {frac} x bound: distance to minimizer at k=0,100,500: " + ", ".join(f"{d:.3g}" for d in dist))

w = window_size(lo.loss_curve(prob, 0), prob.eta, ControllerConfig())
losses = lo.loss_curve(prob, list(range(w + 1)))
fit = fit_exponential(losses)
print(f"controller window w={w}: single-exponential R^2 = {fit.r_squared(losses):.4f}")

mix = lo.loss_mixture(prob)
print(f"loss is a sum of {len(mix.terms)} exponentials; two-term summary (C, c) = {lo.dominant_term(mix)}")
