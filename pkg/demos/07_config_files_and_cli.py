"""Driving runs from a config file through the command-line entry point.

Writes a small config, then calls the same code path as
``exptest train --config ...`` and ``exptest verify-linear``.

    python demos/07_config_files_and_cli.py
"""

from pathlib import Path

from exptest import cli

Path("demo_out").mkdir(exist_ok=True)
cfg = Path("demo_out/quick.cfg")
cfg.write_text(
    "# two seeds of the controller on a MNIST subset\n"
    "dataset = mnist\n"
    "optimizer = exptest\n"
    "lr_multiplier = not-applicable\n"
    "seeds = 0, 1\n"
    "epochs = 2\n"
    "train_subset = 5000\n"
    "output_dir = demo_out/quick\n"
)
print("exit", cli.run(["train", "--config", str(cfg)]))
print("exit", cli.run(["verify-linear", "--seeds", "20"]))
print("exit", cli.run(["verify-linear", "--properties", "bound-dichotomy", "--eta-multiplier", "1.01"]))
