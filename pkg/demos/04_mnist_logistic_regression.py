"""Logistic regression on MNIST with no learning rate to choose.

Computes the starting rate from the input covariance, trains five seeds
and writes per-seed traces plus a summary to demo_out/mnist.
Needs the IDX files under $EXPTEST_DATA_DIR/mnist (default ./data/mnist).

    python demos/04_mnist_logistic_regression.py
"""

import json

from exptest import harness

print(json.dumps(harness.cmd_bound("mnist"), indent=2))

cfg = harness.ExperimentConfig(dataset="mnist", seeds=(0, 1, 2, 3, 4), output_dir="demo_out/mnist")
summary = harness.cmd_train(cfg)
for row in summary["per_seed"]:
    print(f"seed {row['seed']}: {row['metric']:.2f}% in {row['wall_time']:.1f}s")
print(f"test accuracy {summary['mean']:.2f} +/- {summary['std']:.2f}")
