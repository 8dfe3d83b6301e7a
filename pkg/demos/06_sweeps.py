"""Grid sweeps: baselines over learning rates, and the controller over alpha x beta.

Uses a 10 000-image MNIST subset so the whole script runs in about a minute.
Each sweep writes sweep.csv (one row per cell), table.csv (pivoted) and
sweep.json.

    python demos/06_sweeps.py
"""

from pathlib import Path

from exptest import harness

base = harness.ExperimentConfig(dataset="mnist", seeds=(0, 1), train_subset=10_000, output_dir="demo_out/sweep_lr")
grid = harness.SweepGrid(optimizers=("exptest", "sgd", "adam"), lr_multipliers=(0.01, 0.1, 1.0))
harness.cmd_sweep(base, grid)
print(Path("demo_out/sweep_lr/table.csv").read_text())

base = harness.ExperimentConfig(dataset="mnist", seeds=(0, 1), train_subset=10_000, output_dir="demo_out/sweep_ab")
harness.cmd_sweep(base, harness.SweepGrid(alphas=(0.1, 0.05, 0.01), betas=(0.05, 0.1, 0.33)))
print(Path("demo_out/sweep_ab/table.csv").read_text())
