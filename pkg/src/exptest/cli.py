"""Command-line entry point: ``exptest {bound,train,sweep,verify-linear}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from . import harness
from .data_io import DataError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--dataset", choices=sorted(harness.PRESETS))
    p.add_argument("--data-path", help="MNIST IDX directory or housing CSV file")
    p.add_argument("--output-dir", help="directory for CSV traces and JSON summaries")
    p.add_argument("--seeds", help="comma-separated seed list, e.g. 0,1,2,3,4")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--optimizer")
    p.add_argument("--lr-multiplier", help=f"factor on eta_max, or {harness.NOT_APPLICABLE}")
    p.add_argument("--epochs")
    p.add_argument("--batch-size", help="integer, or 'full'")
    p.add_argument("--alpha")
    p.add_argument("--beta")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exptest", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bound", help="print lambda_max and eta_max for a dataset")
    p.add_argument("--dataset", choices=sorted(harness.PRESETS), required=True)
    p.add_argument("--data-path")
    p.add_argument("--batch-size", help="integer, or 'full'")

    p = sub.add_parser("train", help="train one configuration over several seeds")
    _add_run_options(p)

    p = sub.add_parser("sweep", help="grid over optimizers, lr multipliers, alpha, beta, width, depth")
    _add_run_options(p)
    p.add_argument("--optimizers")
    p.add_argument("--lr-multipliers")
    p.add_argument("--alphas")
    p.add_argument("--betas")
    p.add_argument("--widths")
    p.add_argument("--depths")

    p = sub.add_parser("verify-linear", help="check the linear-model theory numerically")
    p.add_argument("--seeds", type=int, help="instance count for the seeded properties")
    p.add_argument(
        "--properties",
        default=",".join(("iterate-equivalence", "bound-dichotomy", "expectation-mc", "curvature-peak")),
        help="comma-separated subset of: " + ", ".join(harness.verify.PROPERTIES),
    )
    p.add_argument("--eta-multiplier", type=float, help="replace the 0.99 convergent-side factor of bound-dichotomy")
    return parser


def _collect(args: argparse.Namespace) -> Dict[str, str]:
    values: Dict[str, str] = harness.read_config_file(args.config) if args.config else {}
    for key in (
        "dataset", "data_path", "output_dir", "seeds", "optimizer", "lr_multiplier", "epochs", "batch_size",
        "alpha", "beta", "optimizers", "lr_multipliers", "alphas", "betas", "widths", "depths",
    ):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = str(v)
    return values


def _print_summary(summary: dict) -> None:
    mean, std = summary["mean"], summary["std"]
    cell = "n/a" if mean is None else f"{mean:.4f} ± {std:.4f}"
    print(f"{summary['metric_name']}: {cell} over {len(summary['per_seed'])} seeds ({summary['n_diverged']} diverged)")


def run(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bound":
            batch = None if args.batch_size is None else harness._convert("batch_size", args.batch_size)
            info = harness.cmd_bound(args.dataset, args.data_path, batch)
            for k in ("dataset", "task_kind", "lambda_max", "c_factor", "eta_max", "m", "s"):
                print(f"{k}: {info[k]}")
            return EXIT_OK
        if args.command == "verify-linear":
            props = [p.strip() for p in args.properties.split(",") if p.strip()]
            reports = harness.cmd_verify_linear(props, seeds=args.seeds, eta_multiplier=args.eta_multiplier)
            for rep in reports.values():
                print(rep.line())
            return EXIT_OK if all(r.passed for r in reports.values()) else EXIT_VERIFY
        base, grid = harness.build_config(_collect(args))
        if args.command == "train":
            summary = harness.cmd_train(base, workers=args.workers)
            _print_summary(summary)
            print(f"wrote {base.output_dir}/summary.json")
        else:
            rows = harness.cmd_sweep(base, grid, workers=args.workers)
            for r in rows:
                axes = " ".join(f"{a}={harness._fmt(r[a])}" for a in harness.SweepGrid.AXES if r[a] is not None)
                cell = "n/a" if r["mean"] is None else f"{r['mean']:.4f} ± {r['std']:.4f}"
                print(f"{axes}: {cell}")
            print(f"wrote {base.output_dir}/sweep.csv and table.csv")
        return EXIT_OK
    except harness.ConfigError as exc:
        print(f"exptest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"exptest: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
