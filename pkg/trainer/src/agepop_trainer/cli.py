"""Trainer command line: `train` and `adaptive-dataset`.

Exit codes: 0 success, 2 dataset schema problem, 3 training failure
(non-finite loss or bad config), 4 harvesting failure, 1 unexpected.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import DatasetError
from .harvest import DEFAULT_AGEPOP_CMD, HarvestError, harvest, spot_check_labels
from .training import TrainConfig, TrainingError, train


def cmd_train(args) -> int:
    config = TrainConfig(
        dataset=args.dataset,
        out=args.out,
        arch=args.arch,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        batch_size=args.batch,
        grid_size=args.grid_size,
        val_fraction=args.val_fraction,
        distill=args.distill,
    )
    report = train(config)
    print(json.dumps(report, indent=2))
    return 0


def cmd_adaptive_dataset(args) -> int:
    agepop_cmd = args.agepop_cmd.split() if args.agepop_cmd else DEFAULT_AGEPOP_CMD
    report = harvest(
        runs=args.runs,
        samples_per_run=args.samples_per_run,
        out_path=args.out,
        agepop_cmd=agepop_cmd,
        jobs=args.jobs,
        horizon=args.horizon,
        grid_points=args.grid_points,
        u_star=args.u_star,
    )
    if args.check_labels:
        report["label_check"] = spot_check_labels(
            args.out, n_checks=args.check_labels, agepop_cmd=agepop_cmd
        )
        if not report["label_check"]["ok"]:
            raise HarvestError(f"label spot check failed: {report['label_check']}")
    print(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agepop-train",
        description="Growth-rate surrogate trainer and dataset harvester",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a surrogate and export v1 weights")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--arch", choices=("dense", "reference-fno"), default="dense")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=4e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--grid-size", type=int, default=64)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--distill", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("adaptive-dataset",
                       help="harvest estimate snapshots from adaptive runs")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--samples-per-run", type=int, default=200)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--horizon", type=float, default=20.0)
    p.add_argument("--grid-points", type=int, default=101)
    p.add_argument("--u-star", type=float, default=0.15)
    p.add_argument("--agepop-cmd", help="override the toolkit command line")
    p.add_argument("--check-labels", type=int, default=0, metavar="N",
                   help="re-solve N harvested labels through the toolkit")
    p.set_defaults(func=cmd_adaptive_dataset)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DatasetError as exc:
        print(json.dumps({"error": "dataset", "message": str(exc)}), file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(json.dumps({"error": "training", "message": str(exc)}), file=sys.stderr)
        return 3
    except HarvestError as exc:
        print(json.dumps({"error": "harvest", "message": str(exc)}), file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
