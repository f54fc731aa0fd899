"""Command-line trainer: train a BNN posterior and export it.

Exit codes: 0 success, 2 configuration or dataset error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import DatasetMissingError
from .train import TrainConfig, train_vi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthocert-train")
    parser.add_argument("--dataset", choices=["toy2d", "mnist"], default="toy2d")
    parser.add_argument("--layers", type=int, default=1, help="hidden layer count")
    parser.add_argument("--units", type=int, default=8, help="nodes per hidden layer")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--prior-std", dest="prior_std", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=128)
    parser.add_argument("--kl-scale", dest="kl_scale", type=float, default=1.0,
                        help="scales the KL term; smaller values widen the posterior")
    parser.add_argument("--data-dir", dest="data_dir", default="data")
    parser.add_argument("--out", required=True, help="export path for the network JSON")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = TrainConfig(
            dataset=args.dataset, hidden_layers=args.layers, hidden_units=args.units,
            epochs=args.epochs, lr=args.lr, prior_std=args.prior_std, seed=args.seed,
            batch_size=args.batch_size, kl_scale=args.kl_scale,
            data_dir=args.data_dir, export_path=args.out)
        _, metrics = train_vi(config)
    except (DatasetMissingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
