"""A small relu network on California Housing, full batch.

Trains 8->32->32->1 with the controller for 10 000 epochs, keeping the
weights with the lowest validation loss. One seed takes a few minutes.
Pass a smaller epoch count as the first argument for a quick look.

    python demos/05_housing_mlp.py [epochs]
"""

import sys

from exptest import harness

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else None
cfg = harness.ExperimentConfig(dataset="housing", seeds=(0,), epochs=epochs, output_dir="demo_out/housing")
summary = harness.cmd_train(cfg)
row = summary["per_seed"][0]
print(f"eta_max {summary['eta_max']:.4f}")
print(f"test MSE {row['metric']:.4f} at best validation epoch {row['best_epoch']} ({row['wall_time']:.0f}s)")
print("validation curve in demo_out/housing/validation_seed0.csv")
