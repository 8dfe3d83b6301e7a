"""ExpTest learning-rate controller.

The controller starts from a spectral upper bound on the learning rate and
watches the per-iteration training loss. While exponential detection is
enabled, each window of losses is fit with both a line and an exponential;
if the exponential is not significantly better (F test), training restarts
from the initial parameters at ``beta * eta``. Once an exponential window is
seen, later windows only check that the loss slope is significantly negative
(t test) and decay ``eta`` in place when it is not.

The controller never takes a user-supplied learning rate: its only source
for ``eta`` is :func:`eta_max`.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .numstats import f_test_nested, fit_exponential, fit_linear, t_test_slope_negative

logger = logging.getLogger(__name__)

__all__ = [
    "TaskKind",
    "BoundSpec",
    "ControllerConfig",
    "ControllerState",
    "DecisionKind",
    "Decision",
    "ControllerEvent",
    "eta_max",
    "window_size",
    "correction_factor",
    "default_max_window",
    "new_state",
    "observe",
    "reinitialize",
    "ExpTestController",
]


class TaskKind(str, enum.Enum):
    REGRESSION_FULL_BATCH = "regression-full-batch"
    REGRESSION_STOCHASTIC = "regression-stochastic"
    CLASSIFICATION = "classification"


@dataclass(frozen=True)
class BoundSpec:
    task_kind: TaskKind
    m: int
    s: int
    lambda_max: float

    def __post_init__(self):
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        if self.m < 1:
            raise ValueError("output dimension m must be >= 1")
        if self.s < 2:
            raise ValueError("training-set size s must be >= 2")
        if not self.lambda_max > 0:
            raise ValueError("lambda_max must be positive")

    @property
    def c_factor(self) -> float:
        if self.task_kind is TaskKind.REGRESSION_FULL_BATCH:
            return self.m * self.s / (self.s - 1)
        if self.task_kind is TaskKind.REGRESSION_STOCHASTIC:
            return float(self.m)
        return 1.0


@dataclass(frozen=True)
class ControllerConfig:
    alpha: float = 0.05
    beta: float = 0.33
    correction_enabled: bool = False
    min_window: int = 4
    max_window: int = 10_000

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 4 <= self.min_window <= self.max_window:
            raise ValueError("need 4 <= min_window <= max_window")


def default_max_window(iterations_per_epoch: int, cap: int = 10_000, min_window: int = 4) -> int:
    """Largest window whose ``w + 1`` losses fit in one epoch, or ``cap``.

    Full-batch training has one iteration per epoch, which would make the
    window cap meaningless; there the cap alone applies.
    """
    if iterations_per_epoch - 1 < min_window:
        return cap
    return min(cap, iterations_per_epoch - 1)


def eta_max(spec: BoundSpec) -> float:
    """Learning-rate upper bound ``2 c / lambda_max``.

    ``c`` is ``m s / (s - 1)`` for full-batch regression, ``m`` for
    stochastic regression and 1 for classification with cross-entropy.
    """
    return 2.0 * spec.c_factor / spec.lambda_max


def window_size(initial_loss: float, eta: float, config: ControllerConfig) -> int:
    """Iterations to collect before testing, clamped to the config limits.

    Twice the latest possible point of maximum curvature of
    ``L0 exp(-eta lambda t)``, converted to steps and rounded to nearest.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    raw = 2.0 * math.sqrt(2.0) * initial_loss / (eta * math.e) + 0.5
    if not math.isfinite(raw):
        return config.max_window
    w = math.floor(raw)
    return int(min(max(w, config.min_window), config.max_window))


def correction_factor(grad_mag_sum: float, grad_vec_sum) -> float:
    """Gradient path length over displacement for one window.

    Returns ``inf`` when the summed gradients cancel exactly; callers cap it.
    """
    disp = float(np.linalg.norm(np.asarray(grad_vec_sum, dtype=float)))
    if disp == 0.0:
        return math.inf
    # the triangle inequality guarantees >= 1 up to rounding
    return max(1.0, float(grad_mag_sum) / disp)


class DecisionKind(str, enum.Enum):
    CONTINUE = "continue"
    REINITIALIZE_MODEL = "reinitialize-model"
    REDUCE_LR = "reduce-lr-in-place"


@dataclass
class Decision:
    kind: DecisionKind
    new_eta: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)


_CONTINUE = Decision(DecisionKind.CONTINUE)


@dataclass
class ControllerEvent:
    """One structured decision-log record."""

    iteration: int
    event: str  # window-complete | exp-accepted | exp-rejected | plateau-accepted | plateau-rejected
    eta: float
    window: int
    correction: float
    p_value: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "event": self.event,
            "eta": self.eta,
            "window": self.window,
            "correction": self.correction,
            "p_value": self.p_value,
        }


@dataclass
class ControllerState:
    eta: float
    window: int = 0
    correction: Optional[float] = None
    t_start: int = 0
    iteration: int = 0
    exp_enabled: bool = True
    loss_buffer: List[float] = field(default_factory=list)
    grad_mag_sum: float = 0.0
    grad_vec_sum: Optional[np.ndarray] = None
    initial_loss: Optional[float] = None
    events: List[ControllerEvent] = field(default_factory=list)


def new_state(bound: BoundSpec) -> ControllerState:
    return ControllerState(eta=eta_max(bound))


def _clear_accumulators(state: ControllerState, config: ControllerConfig) -> None:
    state.grad_mag_sum = 0.0
    if state.grad_vec_sum is not None:
        state.grad_vec_sum = np.zeros_like(state.grad_vec_sum)
    state.correction = None if config.correction_enabled else 1.0


def _accumulate(state: ControllerState, grad) -> None:
    g = np.asarray(grad, dtype=float).ravel()
    if state.grad_vec_sum is None:
        state.grad_vec_sum = np.zeros_like(g)
    state.grad_mag_sum += float(np.linalg.norm(g))
    state.grad_vec_sum += g


def _log(state: ControllerState, event: str, p_value: Optional[float] = None) -> None:
    rec = ControllerEvent(
        iteration=state.iteration,
        event=event,
        eta=state.eta,
        window=state.window,
        correction=float("nan") if state.correction is None else state.correction,
        p_value=p_value,
    )
    state.events.append(rec)
    logger.debug("%s", rec)


def reinitialize(
    state: ControllerState, new_eta: float, config: ControllerConfig, restart_model: bool
) -> ControllerState:
    """Apply a learning-rate decay to the controller state.

    With ``restart_model`` (exponential phase) the loss buffer is cleared and
    the next window starts at the following observation, since the caller
    restores the initial parameters. Otherwise (plateau phase) the window
    restarts at the current iteration and keeps its last loss. In both cases
    the gradient accumulators are zeroed and the window is recomputed from
    the stored initial loss at the new rate.
    """
    state.eta = new_eta
    _clear_accumulators(state, config)
    state.window = window_size(state.initial_loss, new_eta, config)
    if restart_model:
        state.loss_buffer = []
        state.t_start = state.iteration + 1
    else:
        state.loss_buffer = state.loss_buffer[-1:]
        state.t_start = state.iteration
    return state


def _test_point(state: ControllerState, config: ControllerConfig) -> int:
    return min(max(math.floor(state.correction * state.window), state.window), config.max_window)


def _fit_exp_phase(losses):
    exp_fit = fit_exponential(losses)
    lin_fit = fit_linear(losses)
    res = f_test_nested(lin_fit.sse, exp_fit.sse, len(losses))
    diag = {
        "amplitude": exp_fit.amplitude,
        "rate": exp_fit.rate,
        "offset": exp_fit.offset,
        "sse_exp": exp_fit.sse,
        "sse_lin": lin_fit.sse,
        "slope": lin_fit.slope,
        "F": res.statistic,
        "p_value": res.p_value,
    }
    return res.p_value, diag


def _fit_plateau_phase(losses):
    lin_fit = fit_linear(losses)
    res = t_test_slope_negative(lin_fit)
    diag = {"slope": lin_fit.slope, "slope_stderr": lin_fit.slope_stderr, "t": res.statistic, "p_value": res.p_value}
    return res.p_value, diag


def observe(state: ControllerState, config: ControllerConfig, loss: float, grad) -> Decision:
    """Feed one iteration's pre-update loss and gradient; return the decision.

    Call once per optimizer iteration. The first call fixes the initial loss
    that sizes every window.
    """
    loss = float(loss)
    if state.initial_loss is None:
        state.initial_loss = loss if math.isfinite(loss) and loss > 0 else 1.0
        state.window = window_size(state.initial_loss, state.eta, config)
        state.correction = None if config.correction_enabled else 1.0

    try:
        if not math.isfinite(loss):
            return _nonfinite(state, config)
        state.loss_buffer.append(loss)
        k = state.iteration - state.t_start

        if config.correction_enabled and state.correction is None:
            if k < state.window:
                _accumulate(state, grad)
            if k == state.window:
                cw = correction_factor(state.grad_mag_sum, state.grad_vec_sum)
                if not math.isfinite(cw):
                    cw = config.max_window / state.window
                    logger.info("gradients cancelled over window; correction capped at %g", cw)
                state.correction = cw
                _log(state, "window-complete")

        if state.correction is None or k < state.window or k != _test_point(state, config):
            return _CONTINUE
        return _evaluate(state, config, grad)
    finally:
        state.iteration += 1


def _nonfinite(state: ControllerState, config: ControllerConfig) -> Decision:
    new_eta = config.beta * state.eta
    if state.exp_enabled:
        _log(state, "exp-rejected", p_value=float("nan"))
        reinitialize(state, new_eta, config, restart_model=True)
        return Decision(DecisionKind.REINITIALIZE_MODEL, new_eta, {"reason": "non-finite loss"})
    _log(state, "plateau-rejected", p_value=float("nan"))
    reinitialize(state, new_eta, config, restart_model=False)
    return Decision(DecisionKind.REDUCE_LR, new_eta, {"reason": "non-finite loss"})


def _evaluate(state: ControllerState, config: ControllerConfig, grad) -> Decision:
    losses = np.asarray(state.loss_buffer, dtype=float)
    phase_fit = _fit_exp_phase if state.exp_enabled else _fit_plateau_phase
    try:
        p, diag = phase_fit(losses)
    except (ValueError, ArithmeticError) as exc:
        logger.warning("window fit failed at iteration %d (%s); treating as test failure", state.iteration, exc)
        p, diag = 1.0, {"error": str(exc), "p_value": 1.0}

    new_eta = config.beta * state.eta
    if state.exp_enabled:
        if p < config.alpha:
            _log(state, "exp-accepted", p)
            state.exp_enabled = False
            _advance(state, config, grad)
            return Decision(DecisionKind.CONTINUE, None, diag)
        _log(state, "exp-rejected", p)
        reinitialize(state, new_eta, config, restart_model=True)
        return Decision(DecisionKind.REINITIALIZE_MODEL, new_eta, diag)

    if p < config.alpha:
        _log(state, "plateau-accepted", p)
        _advance(state, config, grad)
        return Decision(DecisionKind.CONTINUE, None, diag)
    _log(state, "plateau-rejected", p)
    reinitialize(state, new_eta, config, restart_model=False)
    if config.correction_enabled:
        _accumulate(state, grad)
    return Decision(DecisionKind.REDUCE_LR, new_eta, diag)


def _advance(state: ControllerState, config: ControllerConfig, grad) -> None:
    # next window starts at this iteration; its gradient opens the new accumulation
    state.t_start = state.iteration
    state.loss_buffer = state.loss_buffer[-1:]
    _clear_accumulators(state, config)
    if config.correction_enabled:
        _accumulate(state, grad)


class ExpTestController:
    """Stateful wrapper around :func:`observe` for use inside a training loop.

    >>> ctl = ExpTestController(BoundSpec("classification", m=10, s=100, lambda_max=4.0))
    >>> ctl.eta
    0.5
    """

    def __init__(self, bound: BoundSpec, config: Optional[ControllerConfig] = None):
        self.bound = bound
        self.config = config or ControllerConfig()
        self.state = new_state(bound)

    @property
    def eta(self) -> float:
        return self.state.eta

    @property
    def events(self) -> List[ControllerEvent]:
        return self.state.events

    def observe(self, loss: float, grad) -> Decision:
        return observe(self.state, self.config, loss, grad)
