"""Command line: train, predict, export-fixtures."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .model import ModelSpec, NATIVE_SIZE
from .train import TrainConfig, export_fixtures, predict, train

log = logging.getLogger("skytrainer")


def _build_parser():
    p = argparse.ArgumentParser(prog="skytrainer")
    p.add_argument("--log-level", default="info",
                   choices=["debug", "info", "warning", "error"])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train on a dataset manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=5)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--lr-decay", type=float, default=1.0,
                   help="per-epoch multiplicative learning-rate decay")
    t.add_argument("--warmup", type=int, default=0,
                   help="epochs of linear learning-rate ramp before decay")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--patience", type=int, default=3)
    t.add_argument("--small-input", action="store_true",
                   help="downscale inputs to 160x120 (conv stack unchanged)")
    t.add_argument("--input-size", type=int, nargs=2, metavar=("H", "W"),
                   help="downscale inputs to HxW (overrides --small-input)")

    q = sub.add_parser("predict", help="run one photo through a checkpoint")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--photo", required=True)
    q.add_argument("--out", help="write the prediction JSON here")

    x = sub.add_parser("export-fixtures",
                       help="write (target, prediction) loss fixtures")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--manifest", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--count", type=int, default=16)
    return p


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "train":
        if args.input_size:
            size = tuple(args.input_size)
        elif args.small_input:
            size = (120, 160)
        else:
            size = NATIVE_SIZE
        spec = ModelSpec(input_size=size)
        cfg = TrainConfig(lr=args.lr, lr_decay=args.lr_decay,
                          warmup_epochs=args.warmup,
                          batch_size=args.batch,
                          epochs=args.epochs, patience=args.patience,
                          seed=args.seed)
        result = train(args.manifest, args.out, spec, cfg)
        print(f"checkpoint: {result.checkpoint_path}")
        for epoch, tr, va in result.history:
            print(f"epoch {epoch}: train {tr:.4f} val "
                  f"{'-' if np.isnan(va) else f'{va:.4f}'}")
    elif args.command == "predict":
        log_s, q = predict(args.checkpoint, args.photo)
        payload = {"sun_log_s": [float(v) for v in log_s],
                   "q": [float(v) for v in q]}
        if args.out:
            with open(args.out, "w") as f:
                json.dump(payload, f)
                f.write("\n")
        print(json.dumps({"argmax_bin": int(np.argmax(log_s)),
                          "q": payload["q"]}))
    else:
        fixtures = export_fixtures(args.checkpoint, args.manifest, args.out,
                                   count=args.count)
        print(f"wrote {len(fixtures)} fixtures to {args.out}")
    return 0


def main():
    try:
        raise SystemExit(run())
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1)
