"""Command-line entry point: train, eval, gradcheck, moment-profile.

Exit codes: 0 success, 2 training diverged, 1 any other failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from eluresnet.diagnostics import median_growth, moment_profiles, run_gradcheck_suite
from eluresnet.model import BlockVariant, NetworkConfig
from eluresnet.optim import TrainSchedule
from eluresnet.train import RunConfig, evaluate_checkpoint, train

EXIT_OK, EXIT_FAILURE, EXIT_DIVERGED = 0, 1, 2
VARIANTS = [v.value for v in BlockVariant]


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eluresnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a network and write per-epoch metrics")
    t.add_argument("--dataset", choices=["cifar10", "cifar100"], default="cifar10")
    t.add_argument("--data-dir", default=None, help="CIFAR binary directory (default: $CIFAR_DATA_DIR)")
    t.add_argument("--depth-n", type=int, default=3, help="blocks per stage; depth is 6n+2")
    t.add_argument("--variant", choices=VARIANTS, default="d")
    t.add_argument("--alpha", type=float, default=1.0)
    t.add_argument("--head-elu", choices=["auto", "on", "off"], default="auto")
    t.add_argument("--epochs", type=int, default=164)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--weight-decay", type=float, default=1e-4)
    t.add_argument("--decay-all", action="store_true", help="apply weight decay to BN params and biases too")
    t.add_argument("--batch-size", type=int, default=128)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--decay-epochs", type=_int_list, default=(81, 122))
    t.add_argument("--train-limit", type=int, default=None)
    t.add_argument("--test-limit", type=int, default=None)
    t.add_argument("--mean-only", action="store_true", help="normalize by mean subtraction only")
    t.add_argument("--out", default="metrics.csv")
    t.add_argument("--checkpoint", default=None)
    t.add_argument("--checkpoint-every", type=int, default=None)
    t.add_argument("--resume", default=None, help="checkpoint to continue from")

    e = sub.add_parser("eval", help="evaluate a checkpoint on its test split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", choices=["cifar10", "cifar100"], default=None)
    e.add_argument("--data-dir", default=None)

    g = sub.add_parser("gradcheck", help="finite-difference certification of every backward op")
    g.add_argument("--seed", type=int, default=0)

    m = sub.add_parser("moment-profile", help="per-block activation second moments at initialization")
    m.add_argument("--variant", choices=VARIANTS, default="d")
    m.add_argument("--depth-n", type=int, default=18)
    m.add_argument("--seeds", type=_int_list, default=(0, 1, 2, 3, 4))
    m.add_argument("--batch", type=int, default=8)
    return parser


def _run_config(args) -> RunConfig:
    head = {"auto": None, "on": True, "off": False}[args.head_elu]
    classes = 10 if args.dataset == "cifar10" else 100
    return RunConfig(
        network=NetworkConfig(n=args.depth_n, classes=classes, variant=args.variant,
                              alpha=args.alpha, head_elu=head),
        schedule=TrainSchedule(base_lr=args.lr, decay_points=args.decay_epochs,
                               momentum=args.momentum, weight_decay=args.weight_decay,
                               batch_size=args.batch_size, total_epochs=args.epochs,
                               seed=args.seed, decay_all=args.decay_all),
        dataset=args.dataset, data_dir=args.data_dir, out_csv=args.out,
        checkpoint=args.checkpoint, resume=args.resume, train_limit=args.train_limit,
        test_limit=args.test_limit, normalize_std=not args.mean_only,
        checkpoint_every=args.checkpoint_every)


def cmd_train(args) -> int:
    result = train(_run_config(args))
    if result.diverged:
        print(f"DIVERGED at epoch {result.history[-1].epoch}; metrics in {args.out}")
        return EXIT_DIVERGED
    best = result.best_epoch
    print(f"final-epoch test error: {result.final_test_error:.2f}%")
    if best is not None:
        print(f"best-epoch test error: {best.test_error_pct:.2f}% (epoch {best.epoch})")
    return EXIT_OK


def cmd_eval(args) -> int:
    err, manifest = evaluate_checkpoint(args.checkpoint, data_dir=args.data_dir, dataset=args.dataset)
    print(f"test error: {err:.4f}% (recorded {float(manifest['test_error']):.4f}%)")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = run_gradcheck_suite(args.seed)
    for r in reports:
        print(r.line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILURE


def cmd_moment_profile(args) -> int:
    profiles = moment_profiles(args.variant, args.depth_n, args.seeds, args.batch)
    diverged = False
    for seed, prof in zip(args.seeds, profiles):
        finite = bool(np.isfinite(prof).all())
        diverged |= not finite
        ratio = prof[-1] / prof[0] if finite else math.inf
        print(f"seed={seed} growth={ratio:.4g} max/min={prof.max() / prof.min():.4g} "
              f"moments=" + ",".join(f"{v:.4g}" for v in prof))
    print(f"variant={args.variant} depth={6 * args.depth_n + 2} median_growth={median_growth(profiles):.4g}"
          + (" DIVERGED" if diverged else ""))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "moment-profile": cmd_moment_profile}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - any non-divergence failure maps to exit 1
        logging.getLogger("eluresnet").error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
