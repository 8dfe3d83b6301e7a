"""How the controller reacts to three kinds of loss trace.

An exponential decay is accepted, a rising ramp forces a restart at a
smaller rate, and a flat plateau lowers the rate in place.

    python demos/03_controller_traces.py
"""

import numpy as np

from exptest.lr_control import BoundSpec, ControllerConfig, ExpTestController, window_size


def run(name, losses, eta):
    # a classification bound with lambda_max = 2 / eta starts the controller at eta
    ctl = ExpTestController(BoundSpec("classification", 1, 10, 2.0 / eta))
    for loss in losses:
        decision = ctl.observe(float(loss), np.ones(3))
    print(f"{name}: last decision {decision.kind.value}, eta {eta:g} -> {ctl.eta:.4g}")
    for event in ctl.events:
        print("   ", event.as_dict())


cfg = ControllerConfig()
curve = lambda t: 3.0 * np.exp(-0.4 * t) + 0.2
w = window_size(curve(0), 1.0, cfg)
run("exponential", curve(np.arange(w + 1)), 1.0)
run("ramp", 1.0 + np.arange(window_size(1.0, 0.1, cfg) + 1) / 100.0, 0.1)
run("plateau", np.concatenate([curve(np.arange(w + 1)), np.full(w, curve(w))]), 1.0)
