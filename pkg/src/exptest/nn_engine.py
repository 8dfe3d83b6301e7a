"""Dense affine+activation networks, their losses, baseline optimizers and a trainer.

All parameters live in one flat vector (``DenseNetwork.params``); each
layer's weight matrix and bias are views into it, so gradients, optimizer
state and the controller's accumulators are plain 1-D arrays.

Batches are row-major: ``x`` is ``(batch, n_in)``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .lr_control import DecisionKind, ExpTestController

logger = logging.getLogger(__name__)

CE_FLOOR = 1e-12
DIVERGENCE_FACTOR = 1e6


class LossKind(str, enum.Enum):
    MSE_HALVED = "mse-halved"
    CROSS_ENTROPY = "cross-entropy"


ACTIVATIONS = ("relu", "identity", "softmax")


@dataclass(frozen=True)
class Architecture:
    sizes: Tuple[int, ...]
    hidden: str = "relu"
    output: str = "identity"
    use_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(v) for v in self.sizes))
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if self.hidden not in ("relu", "identity") or self.output not in ACTIVATIONS:
            raise ValueError("unknown activation")

    @property
    def activations(self) -> List[str]:
        return [self.hidden] * (len(self.sizes) - 2) + [self.output]


@dataclass
class Layer:
    W: np.ndarray  # (out, in) view into the flat parameter vector
    b: Optional[np.ndarray]
    activation: str


class DenseNetwork:
    def __init__(self, arch: Architecture, params: Optional[np.ndarray] = None):
        self.arch = arch
        shapes = []
        total = 0
        for fan_in, fan_out in zip(arch.sizes[:-1], arch.sizes[1:]):
            shapes.append((fan_out, fan_in))
            total += fan_out * fan_in + (fan_out if arch.use_bias else 0)
        self.params = np.zeros(total) if params is None else np.array(params, dtype=float)
        if self.params.shape != (total,):
            raise ValueError(f"expected {total} parameters, got {self.params.shape}")
        self._shapes = shapes
        self.layers = self._views(self.params)

    def _views(self, flat: np.ndarray) -> List[Layer]:
        out = []
        pos = 0
        for (fo, fi), act in zip(self._shapes, self.arch.activations):
            W = flat[pos:pos + fo * fi].reshape(fo, fi)
            pos += fo * fi
            b = None
            if self.arch.use_bias:
                b = flat[pos:pos + fo]
                pos += fo
            out.append(Layer(W, b, act))
        return out

    @property
    def parameter_count(self) -> int:
        return self.params.size

    def grad_views(self, flat: np.ndarray) -> List[Layer]:
        return self._views(flat)

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(self.arch, self.params.copy())

    def set_params(self, theta: np.ndarray) -> None:
        self.params[:] = theta


def build(sizes: Sequence[int], hidden: str = "relu", output: str = "identity", use_bias: bool = True) -> DenseNetwork:
    return DenseNetwork(Architecture(tuple(sizes), hidden, output, use_bias))


def initialize(arch: Architecture, seed: int) -> DenseNetwork:
    """Fan-based uniform init, zero biases; fully determined by ``seed``.

    ReLU layers draw from U(+-sqrt(6 / fan_in)); identity and softmax layers
    from U(+-sqrt(6 / (fan_in + fan_out))).
    """
    net = DenseNetwork(arch)
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        fan_out, fan_in = layer.W.shape
        if layer.activation == "relu":
            bound = math.sqrt(6.0 / fan_in)
        else:
            bound = math.sqrt(6.0 / (fan_in + fan_out))
        layer.W[...] = rng.uniform(-bound, bound, size=layer.W.shape)
        if layer.b is not None:
            layer.b[...] = 0.0
    return net


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(net: DenseNetwork, x: np.ndarray) -> Tuple[np.ndarray, list]:
    """Outputs plus the per-layer inputs and pre-activations needed by backprop."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape[1] != net.arch.sizes[0]:
        raise ValueError(f"input dimension {a.shape[1]} does not match network input {net.arch.sizes[0]}")
    cache = []
    for layer in net.layers:
        z = a @ layer.W.T
        if layer.b is not None:
            z += layer.b
        cache.append((a, z))
        if layer.activation == "relu":
            a = np.maximum(z, 0.0)
        elif layer.activation == "softmax":
            a = _softmax(z)
        else:
            a = z
    return a, cache


def loss_value(out: np.ndarray, y: np.ndarray, kind: LossKind) -> float:
    kind = LossKind(kind)
    if kind is LossKind.MSE_HALVED:
        r = out - y
        return float(np.sum(r * r)) / (2.0 * y.shape[1] * y.shape[0])
    return float(-np.sum(y * np.log(np.maximum(out, CE_FLOOR)))) / y.shape[0]


def loss_and_gradient(net: DenseNetwork, x: np.ndarray, y: np.ndarray, loss_kind) -> Tuple[float, np.ndarray]:
    """Batch-averaged loss and its gradient over all parameters (flat vector).

    ``mse-halved`` is ``||out - y||^2 / (2 m)`` per sample. ``cross-entropy``
    expects a softmax output layer and uses the fused ``p - y`` gradient.
    """
    kind = LossKind(loss_kind)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None, :] if net.arch.sizes[-1] > 1 else y[:, None]
    out, cache = forward(net, x)
    batch = y.shape[0]
    if batch == 0:
        raise ValueError("empty batch")
    loss = loss_value(out, y, kind)

    last = net.layers[-1].activation
    if kind is LossKind.CROSS_ENTROPY:
        if last != "softmax":
            raise ValueError("cross-entropy requires a softmax output layer")
        delta = (out - y) / batch
    else:
        if last == "softmax":
            raise ValueError("softmax output is only paired with cross-entropy")
        delta = (out - y) / (y.shape[1] * batch)
        if last == "relu":
            delta = delta * (cache[-1][1] > 0)

    grad = np.zeros_like(net.params)
    gl = net.grad_views(grad)
    for i in range(len(net.layers) - 1, -1, -1):
        a_in, _ = cache[i]
        gl[i].W[...] = delta.T @ a_in
        if gl[i].b is not None:
            gl[i].b[...] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.layers[i].W
            if net.layers[i - 1].activation == "relu":
                delta = delta * (cache[i - 1][1] > 0)
    return loss, grad


# --------------------------------------------------------------------------
# Optimizers
# --------------------------------------------------------------------------


OPTIMIZER_KINDS = ("sgd", "sgd-momentum", "adam", "rmsprop", "adadelta", "exptest", "exptest-momentum")
LR_FREE_KINDS = ("adadelta", "exptest", "exptest-momentum")


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "sgd"
    momentum: float = 0.9
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    rms_alpha: float = 0.99
    rms_eps: float = 1e-8
    rho: float = 0.9
    adadelta_eps: float = 1e-6

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}")

    @property
    def uses_controller(self) -> bool:
        return self.kind.startswith("exptest")

    @property
    def lr_free(self) -> bool:
        return self.kind in LR_FREE_KINDS


class Optimizer:
    """In-place update rule with its own state; ``reset`` clears the state."""

    def __init__(self, spec: OptimizerSpec, size: int):
        self.spec = spec
        self.size = size
        self.reset()

    def reset(self) -> None:
        self.t = 0
        self.buf1 = np.zeros(self.size)
        self.buf2 = np.zeros(self.size)

    def step(self, params: np.ndarray, grad: np.ndarray, eta: float) -> None:
        sp = self.spec
        kind = sp.kind
        self.t += 1
        if kind in ("sgd", "exptest"):
            params -= eta * grad
        elif kind in ("sgd-momentum", "exptest-momentum"):
            self.buf1 *= sp.momentum
            self.buf1 += grad
            params -= eta * self.buf1
        elif kind == "adam":
            b1, b2 = sp.betas
            self.buf1 *= b1
            self.buf1 += (1 - b1) * grad
            self.buf2 *= b2
            self.buf2 += (1 - b2) * grad * grad
            mhat = self.buf1 / (1 - b1**self.t)
            vhat = self.buf2 / (1 - b2**self.t)
            params -= eta * mhat / (np.sqrt(vhat) + sp.adam_eps)
        elif kind == "rmsprop":
            self.buf1 *= sp.rms_alpha
            self.buf1 += (1 - sp.rms_alpha) * grad * grad
            params -= eta * grad / (np.sqrt(self.buf1) + sp.rms_eps)
        elif kind == "adadelta":
            # buf1: running E[g^2], buf2: running E[dx^2]; eta is ignored
            self.buf1 *= sp.rho
            self.buf1 += (1 - sp.rho) * grad * grad
            dx = np.sqrt(self.buf2 + sp.adadelta_eps) / np.sqrt(self.buf1 + sp.adadelta_eps) * grad
            self.buf2 *= sp.rho
            self.buf2 += (1 - sp.rho) * dx * dx
            params -= dx


def optimizer_step(spec: OptimizerSpec, state: Optional[Optimizer], params: np.ndarray, grad: np.ndarray, eta: float):
    """Functional form: returns ``(new_params, state)`` without touching ``params``."""
    if state is None:
        state = Optimizer(spec, params.size)
    out = np.array(params, dtype=float)
    state.step(out, np.asarray(grad, dtype=float), eta)
    return out, state


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


@dataclass
class TrainResult:
    losses: np.ndarray
    lrs: np.ndarray
    epochs: np.ndarray
    events: list = field(default_factory=list)  # ControllerEvent records
    val_losses: List[float] = field(default_factory=list)
    network: Optional[DenseNetwork] = None
    best_params: Optional[np.ndarray] = None
    best_epoch: int = -1
    diverged: bool = False
    iterations: int = 0


def iterate_batches(s: int, batch_size: Optional[int], seed: int, epoch: int):
    if batch_size is None or batch_size >= s:
        yield None
        return
    perm = np.random.default_rng([seed, epoch]).permutation(s)
    for start in range(0, s, batch_size):
        yield perm[start:start + batch_size]


# diverging runs are detected from the loss itself; overflow warnings add nothing
@np.errstate(over="ignore", invalid="ignore")
def train(
    network: DenseNetwork,
    inputs: np.ndarray,
    targets: np.ndarray,
    optimizer: OptimizerSpec,
    loss_kind,
    *,
    epochs: Optional[int] = None,
    iterations: Optional[int] = None,
    batch_size: Optional[int] = None,
    eta: Optional[float] = None,
    controller: Optional[ExpTestController] = None,
    seed: int = 0,
    validation: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    keep_best: bool = False,
    patience: Optional[int] = None,
) -> TrainResult:
    """Train ``network`` in place and return the run's traces.

    The recorded loss at each iteration is the mini-batch loss before that
    iteration's update. The budget (``epochs`` or ``iterations``) counts
    every iteration, including ones later discarded by a model restart.
    With a controller, ``eta`` comes from the controller and a
    reinitialize-model decision restores the initial parameters and clears
    the optimizer state. A non-finite loss (or one above 1e6 x the initial
    loss) halts the run as diverged, except while the controller is still in
    its exponential-search phase, where it triggers a restart instead.
    With ``validation`` and ``patience``, training stops once the validation
    loss has not improved for ``patience`` consecutive epochs.
    """
    if optimizer.uses_controller != (controller is not None):
        raise ValueError("a controller is required exactly for exptest optimizers")
    if controller is None and eta is None and not optimizer.lr_free:
        raise ValueError(f"{optimizer.kind} needs a learning rate")
    if controller is not None and eta is not None:
        raise ValueError("exptest takes its learning rate from the controller")
    s = inputs.shape[0]
    per_epoch = 1 if batch_size is None or batch_size >= s else math.ceil(s / batch_size)
    if iterations is None:
        iterations = (epochs or 0) * per_epoch
    n_epochs = math.ceil(iterations / per_epoch) if iterations else 0

    theta0 = network.params.copy()
    opt = Optimizer(optimizer, network.parameter_count)
    losses = np.empty(iterations)
    lrs = np.empty(iterations)
    epoch_of = np.empty(iterations, dtype=np.int64)
    res = TrainResult(losses=losses, lrs=lrs, epochs=epoch_of, network=network)
    best_val = math.inf
    initial_loss = None
    it = 0
    n_events = 0

    for epoch in range(n_epochs):
        for idx in iterate_batches(s, batch_size, seed, epoch):
            if it >= iterations:
                break
            xb = inputs if idx is None else inputs[idx]
            yb = targets if idx is None else targets[idx]
            loss, grad = loss_and_gradient(network, xb, yb, loss_kind)
            cur_eta = controller.eta if controller is not None else (eta if eta is not None else float("nan"))
            losses[it] = loss
            lrs[it] = cur_eta
            epoch_of[it] = epoch
            if initial_loss is None:
                initial_loss = loss
            bad = not math.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(initial_loss, 1e-300)
            searching = controller is not None and controller.state.exp_enabled
            if bad and not searching:
                res.diverged = True
                it += 1
                break
            if math.isfinite(loss) and np.all(np.isfinite(grad)):
                opt.step(network.params, grad, cur_eta)
            if controller is not None:
                decision = controller.observe(loss, grad)
                if decision.kind is DecisionKind.REINITIALIZE_MODEL:
                    network.set_params(theta0)
                    opt.reset()
                for ev in controller.events[n_events:]:
                    res.events.append(ev)
                n_events = len(controller.events)
            it += 1
        if res.diverged:
            break
        if validation is not None:
            vout, _ = forward(network, validation[0])
            vl = loss_value(vout, validation[1], loss_kind)
            res.val_losses.append(vl)
            if vl < best_val:
                best_val = vl
                res.best_epoch = epoch
                if keep_best:
                    res.best_params = network.params.copy()
            elif patience is not None and epoch - res.best_epoch >= patience:
                break

    res.iterations = it
    res.losses = losses[:it]
    res.lrs = lrs[:it]
    res.epochs = epoch_of[:it]
    return res


def predict(net: DenseNetwork, x: np.ndarray, batch: int = 8192) -> np.ndarray:
    outs = [forward(net, x[i:i + batch])[0] for i in range(0, x.shape[0], batch)]
    return np.concatenate(outs) if outs else np.empty((0, net.arch.sizes[-1]))


def accuracy(net: DenseNetwork, x: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(predict(net, x), axis=1) == labels))


def mse(net: DenseNetwork, x: np.ndarray, y: np.ndarray) -> float:
    """Plain mean squared error (not halved), averaged over samples and outputs."""
    r = predict(net, x) - y
    return float(np.mean(r * r))
