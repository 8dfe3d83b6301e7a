"""Deciding whether a window of losses still decays exponentially.

Fits a line and a single exponential to two synthetic loss windows, then
runs the nested F test and the negative-slope t test the controller uses.

    python demos/01_loss_window_statistics.py
"""

import numpy as np

from exptest.numstats import f_test_nested, fit_exponential, fit_linear, t_test_slope_negative

rng = np.random.default_rng(0)
t = np.arange(60)

decaying = 2.0 * np.exp(-0.08 * t) + 0.3 + 0.01 * rng.standard_normal(t.size)
flat = 0.3 + 0.01 * rng.standard_normal(t.size)

for name, window in (("decaying", decaying), ("flat", flat)):
    line = fit_linear(window)
    curve = fit_exponential(window)
    f = f_test_nested(line.sse, curve.sse, window.size)
    slope = t_test_slope_negative(line)
    print(f"{name} window")
    print(f"  exponential fit: A={curve.amplitude:.3f} B={curve.rate:.4f} C={curve.offset:.3f} R^2={curve.r_squared(window):.4f}")
    print(f"  line fit: slope={line.slope:.2e} +/- {line.slope_stderr:.1e}")
    print(f"  F test (exponential beats line): F={f.statistic:.2f} p={f.p_value:.3g}")
    print(f"  t test (slope below zero): t={slope.statistic:.2f} p={slope.p_value:.3g}")
