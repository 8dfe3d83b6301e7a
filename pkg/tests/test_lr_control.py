import inspect
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exptest import linear_oracle as lo
from exptest.lr_control import (
    BoundSpec,
    ControllerConfig,
    DecisionKind,
    ExpTestController,
    TaskKind,
    correction_factor,
    default_max_window,
    eta_max,
    new_state,
    observe,
    reinitialize,
    window_size,
)
from exptest.verify import random_problem

CFG = ControllerConfig()


def feed(ctl, losses, grads=None):
    out = []
    for i, loss in enumerate(losses):
        g = np.ones(3) if grads is None else grads[i]
        out.append(ctl.observe(loss, g))
    return out


def test_eta_max_examples():
    assert eta_max(BoundSpec("classification", 10, 100, 4.0)) == pytest.approx(0.5)
    assert eta_max(BoundSpec("regression-full-batch", 2, 101, 2.0)) == pytest.approx(2.02)
    assert eta_max(BoundSpec("regression-stochastic", 3, 1000, 6.0)) == pytest.approx(1.0)


@pytest.mark.parametrize("m,s,lam", [(0, 10, 1.0), (1, 1, 1.0), (1, 10, 0.0), (1, 10, -2.0)])
def test_bound_spec_rejects_invalid(m, s, lam):
    with pytest.raises(ValueError):
        BoundSpec("classification", m, s, lam)


@pytest.mark.parametrize(
    "kwargs", [dict(alpha=0.0), dict(alpha=1.0), dict(beta=0.0), dict(beta=1.5), dict(min_window=3), dict(min_window=10, max_window=8)]
)
def test_controller_config_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        ControllerConfig(**kwargs)


def test_window_size_examples():
    assert window_size(math.e, 1.0, CFG) == 4  # raw 3, clamped up
    assert window_size(2.303, 0.005, CFG) == 479
    assert window_size(1.0, 1e9, CFG) == CFG.min_window
    assert window_size(1.0, 1e-12, CFG) == CFG.max_window
    assert window_size(1.0, 1e-12, ControllerConfig(max_window=50)) == 50


def test_default_max_window():
    assert default_max_window(1875) == 1874
    assert default_max_window(50_000) == 10_000
    assert default_max_window(5) == 4
    assert default_max_window(1) == 10_000  # full batch: the cap alone


def test_correction_examples():
    g = np.array([0.3, -1.2, 2.0])
    assert correction_factor(5 * np.linalg.norm(g), 5 * g) == pytest.approx(1.0)
    assert correction_factor(3 * np.linalg.norm(g), g) == pytest.approx(3.0)
    assert correction_factor(2.0, np.array([1.0, 1.0])) == pytest.approx(math.sqrt(2))
    assert math.isinf(correction_factor(2.0, np.zeros(2)))


@settings(max_examples=100, deadline=None)
@given(k=st.integers(1, 20), dim=st.integers(1, 10), seed=st.integers(0, 2**31 - 1))
def test_correction_at_least_one(k, dim, seed):
    G = np.random.default_rng(seed).standard_normal((k, dim))
    S_vec = G.sum(axis=0)
    if np.linalg.norm(S_vec) > 0:
        assert correction_factor(np.linalg.norm(G, axis=1).sum(), S_vec) >= 1.0


def test_cancelling_gradients_cap_the_correction():
    cfg = ControllerConfig(correction_enabled=True, max_window=40)
    ctl = ExpTestController(BoundSpec("classification", 1, 10, 2.0), cfg)  # eta 1
    w = window_size(4.0, 1.0, cfg)
    assert w % 2 == 0
    g = np.array([1.0, 2.0])
    feed(ctl, [4.0] * (w + 1), [g if i % 2 == 0 else -g for i in range(w + 1)])
    assert ctl.state.correction == pytest.approx(40 / w)


def _exp_phase_controller(eta=1.0, **cfg):
    # lambda_max chosen so eta_max == eta for a classification bound
    return ExpTestController(BoundSpec("classification", 1, 10, 2.0 / eta), ControllerConfig(**cfg))


def test_exponential_trace_passes_f_gate():
    ctl = _exp_phase_controller()
    L = lambda t: 3.0 * np.exp(-0.4 * t) + 0.2
    w = window_size(L(0), 1.0, CFG)
    decisions = feed(ctl, L(np.arange(w + 1)))
    assert all(d.kind is DecisionKind.CONTINUE for d in decisions)
    assert not ctl.state.exp_enabled
    assert decisions[-1].diagnostics["p_value"] < 0.05
    assert [e.event for e in ctl.events] == ["exp-accepted"]


def test_ramp_triggers_restart_with_beta_decay():
    ctl = _exp_phase_controller(eta=0.1)
    w = ctl.state.window or window_size(1.0, 0.1, CFG)
    decisions = feed(ctl, np.arange(w + 1) / 100.0 + 1.0)
    assert decisions[-1].kind is DecisionKind.REINITIALIZE_MODEL
    assert decisions[-1].new_eta == pytest.approx(0.33 * 0.1, rel=0, abs=0)
    assert ctl.eta == 0.33 * 0.1
    assert ctl.state.loss_buffer == []
    assert ctl.state.exp_enabled
    assert ctl.state.window == window_size(1.0, 0.033, CFG)


def test_plateau_triggers_in_place_reduction():
    ctl = _exp_phase_controller()
    L = lambda t: 3.0 * np.exp(-0.4 * t) + 0.2
    w = window_size(L(0), 1.0, CFG)
    feed(ctl, L(np.arange(w + 1)))
    assert not ctl.state.exp_enabled
    flat = float(L(w))  # continue level from the last loss so the window is exactly flat
    decisions = feed(ctl, [flat] * w)
    assert decisions[-1].kind is DecisionKind.REDUCE_LR
    assert decisions[-1].new_eta == 0.33 * 1.0
    assert decisions[-1].diagnostics["p_value"] >= 0.05
    assert ctl.state.loss_buffer == [flat]  # window restarts at the current iteration
    assert [e.event for e in ctl.events][-1] == "plateau-rejected"


def test_plateau_phase_keeps_accepting_a_clear_decline():
    ctl = _exp_phase_controller()
    L = lambda t: 3.0 * np.exp(-0.4 * t) + 0.2
    w = window_size(L(0), 1.0, CFG)
    feed(ctl, L(np.arange(w + 1)))
    decisions = feed(ctl, L(w) - 0.01 * np.arange(1, 3 * w + 1))
    assert all(d.kind is DecisionKind.CONTINUE for d in decisions)
    assert [e.event for e in ctl.events].count("plateau-accepted") == 3


def test_nonfinite_loss_restarts_or_reduces():
    ctl = _exp_phase_controller()
    assert feed(ctl, [1.0, math.inf])[-1].kind is DecisionKind.REINITIALIZE_MODEL
    ctl.state.exp_enabled = False
    assert feed(ctl, [math.nan])[-1].kind is DecisionKind.REDUCE_LR


def test_reinitialize_contract():
    state = new_state(BoundSpec("classification", 1, 10, 2.0 / 0.3))
    state.initial_loss = 10.0
    state.window = window_size(10.0, 0.3, CFG)
    state.loss_buffer = [1.0, 0.9, 0.8]
    state.grad_mag_sum = 3.0
    state.grad_vec_sum = np.ones(2)
    state.iteration = 7
    w_before = state.window
    reinitialize(state, 0.33 * 0.3, CFG, restart_model=True)
    assert state.eta == pytest.approx(0.099)
    assert state.window / w_before == pytest.approx(1 / 0.33, rel=0.02)
    assert state.grad_mag_sum == 0.0 and not state.grad_vec_sum.any()
    assert state.loss_buffer == []
    assert state.t_start == 8

    state.loss_buffer = [0.5, 0.4]
    reinitialize(state, 0.33 * state.eta, CFG, restart_model=False)
    assert state.loss_buffer == [0.4]
    assert state.t_start == state.iteration


def test_no_user_learning_rate_anywhere():
    lr_names = {"eta", "lr", "learning_rate", "eta0", "initial_lr", "lr0"}
    for fn in (ExpTestController.__init__, new_state, observe):
        assert not lr_names & set(inspect.signature(fn).parameters)
    assert not lr_names & set(inspect.signature(BoundSpec).parameters)
    assert not lr_names & set(inspect.signature(ControllerConfig).parameters)
    ctl = ExpTestController(BoundSpec("regression-full-batch", 2, 101, 2.0))
    assert ctl.eta == eta_max(ctl.bound)


def _linear_state(prob, eta):
    bound = BoundSpec(TaskKind.REGRESSION_FULL_BATCH, prob.m, prob.s, 1.0)
    state = new_state(bound)
    state.eta = eta  # probe a chosen rate instead of the bound itself
    return state


def test_first_window_accepts_inside_bound():
    accepted = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        prob = random_problem(rng, n, m, int(rng.integers(n + 5, 101)), eta_fraction=0.5)
        state = _linear_state(prob, prob.eta)
        w = window_size(lo.loss_curve(prob, 0), prob.eta, CFG)
        for loss in lo.loss_curve(prob, list(range(w + 1))):
            d = observe(state, CFG, loss, None)
        accepted += d.kind is DecisionKind.CONTINUE and not state.exp_enabled
    assert accepted >= 95


def test_restart_above_bound():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        prob = random_problem(rng, n, m, int(rng.integers(n + 5, 101)), eta_fraction=1.5)
        state = _linear_state(prob, prob.eta)
        L0 = lo.loss_curve(prob, 0)
        w = window_size(L0, prob.eta, CFG)
        # grows without bound: the tail of the trace is increasing
        losses = np.array([lo._loss(prob, T) for T in lo.iterate_gd(prob, 2 * w + 1)])
        assert losses[-1] > losses[w]
        kinds = [observe(state, CFG, loss, None).kind for loss in losses]
        assert DecisionKind.REINITIALIZE_MODEL in kinds


def test_replay_is_deterministic():
    rng = np.random.default_rng(9)
    losses = np.abs(np.cumsum(rng.standard_normal(400))) + 1.0
    grads = rng.standard_normal((400, 5))
    runs = []
    for _ in range(2):
        ctl = ExpTestController(BoundSpec("classification", 1, 100, 20.0), ControllerConfig(correction_enabled=True, max_window=60))
        kinds = [d.kind for d in feed(ctl, losses, grads)]
        runs.append((kinds, [e.as_dict() for e in ctl.events]))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]


def test_eta_only_ever_shrinks_by_beta():
    rng = np.random.default_rng(5)
    ctl = ExpTestController(BoundSpec("classification", 1, 100, 2.0), ControllerConfig(max_window=30))
    etas = [ctl.eta]
    for loss in np.abs(rng.standard_normal(2000)) + 1.0:
        ctl.observe(loss, np.ones(2))
        etas.append(ctl.eta)
    changes = [b / a for a, b in zip(etas, etas[1:]) if b != a]
    assert changes and all(r == pytest.approx(0.33, rel=1e-12) for r in changes)
