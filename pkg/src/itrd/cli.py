"""Command line interface: ``itrd {entropy,mi,loss,demo}``.

Every command prints (or writes) a JSON report::

    {"command": ..., "config": {...}, "results": {...}, "series": {...}, "wall_time_s": ...}

Exit codes: 0 success, 2 input error, 3 degenerate math, 4 training failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .entropy import gram_matrix, joint_entropy, matrix_entropy, mutual_information
from .errors import DegenerateKernelError, DimensionError, DomainError, NumericalError, TrainingError
from .harness import distill_student, evaluate, generate_blobs, train_teacher
from .io import InputError, dump_report, read_features
from .linalg import trace_normalize
from .losses import EmbeddingLayer, ItrdConfig, MiVariant, itrd_loss

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MATH = 3
EXIT_TRAINING = 4

log = logging.getLogger("itrd")

_DEFAULTS = ItrdConfig()


def _check_alpha(alpha):
    if not alpha > 0 or alpha == float("inf"):
        raise InputError(f"--alpha must be a positive finite number, got {alpha}")


def _npd_from_file(path):
    return trace_normalize(gram_matrix(read_features(path)))


def cmd_entropy(args) -> dict:
    _check_alpha(args.alpha)
    a = _npd_from_file(args.input)
    return {
        "config": {"input": str(args.input), "alpha": args.alpha},
        "results": {"entropy_bits": matrix_entropy(a, args.alpha), "n": a.shape[0]},
    }


def cmd_mi(args) -> dict:
    _check_alpha(args.alpha)
    za = read_features(args.a)
    zb = read_features(args.b)
    if za.shape[0] != zb.shape[0]:
        raise InputError(f"row counts differ: {args.a} has {za.shape[0]}, {args.b} has {zb.shape[0]}")
    a = trace_normalize(gram_matrix(za))
    b = trace_normalize(gram_matrix(zb))
    return {
        "config": {"a": str(args.a), "b": str(args.b), "alpha": args.alpha},
        "results": {
            "entropy_a": matrix_entropy(a, args.alpha),
            "entropy_b": matrix_entropy(b, args.alpha),
            "joint_entropy": joint_entropy(a, b, args.alpha),
            "mutual_information": mutual_information(a, b, args.alpha),
        },
    }


def cmd_loss(args) -> dict:
    zs = read_features(args.student)
    zt = read_features(args.teacher)
    if zs.shape[0] != zt.shape[0]:
        raise InputError(f"row counts differ: student has {zs.shape[0]}, teacher has {zt.shape[0]}")
    if zs.shape[0] < 2:
        raise InputError("loss needs at least 2 rows")
    try:
        cfg = ItrdConfig(alpha_corr=args.alpha_corr, beta_corr=args.beta_corr,
                         beta_mi=args.beta_mi, mi_variant=args.mi_variant)
    except DomainError as exc:
        raise InputError(str(exc)) from None
    embed = None
    if zs.shape[1] != zt.shape[1]:
        if args.embed_seed is None:
            raise InputError(
                f"student has {zs.shape[1]} columns and teacher {zt.shape[1]}; pass --embed-seed"
            )
        embed = EmbeddingLayer.init(zs.shape[1], zt.shape[1], np.random.default_rng(args.embed_seed),
                                    trainable=False)
    parts = itrd_loss(zs, zt, embed, 0.0, cfg)
    config = {"student": str(args.student), "teacher": str(args.teacher),
              "embed_seed": args.embed_seed, **cfg.to_dict()}
    return {
        "config": config,
        "results": {"corr": parts.corr, "mi": parts.mi, "weighted": parts.total},
    }


def cmd_demo(args) -> dict:
    ds = generate_blobs(args.seed)
    teacher = train_teacher(ds, seed=args.seed)
    if args.variant == "itrd":
        cfg = ItrdConfig()
    else:
        cfg = ItrdConfig(beta_corr=0.0, beta_mi=0.0)
    run = distill_student(ds, teacher, cfg=cfg, epochs=args.epochs, seed=args.seed)
    print(f"{args.variant} seed={args.seed} test_acc={run.final_accuracy:.4f}")
    return {
        "config": {"seed": args.seed, "epochs": args.epochs, "variant": args.variant,
                   "lr": run.lr, "momentum": run.momentum, "batch_size": run.batch_size,
                   **cfg.to_dict()},
        "results": {"test_acc": run.final_accuracy,
                    "teacher_test_acc": evaluate(teacher, ds.x_test, ds.y_test)},
        "series": run.metrics,
    }


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--timing", action="store_true",
                        help="record wall time in the report (makes output non-reproducible)")

    parser = argparse.ArgumentParser(prog="itrd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("entropy", parents=[common], help="matrix-based Renyi entropy of a feature file")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--alpha", type=float, default=_DEFAULTS.alpha_mi)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("mi", parents=[common], help="matrix-based mutual information of two feature files")
    p.add_argument("--a", required=True, type=Path)
    p.add_argument("--b", required=True, type=Path)
    p.add_argument("--alpha", type=float, default=_DEFAULTS.alpha_mi)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("loss", parents=[common], help="ITRD losses between student and teacher features")
    p.add_argument("--student", required=True, type=Path)
    p.add_argument("--teacher", required=True, type=Path)
    p.add_argument("--alpha-corr", type=float, default=_DEFAULTS.alpha_corr)
    p.add_argument("--beta-corr", type=float, default=_DEFAULTS.beta_corr)
    p.add_argument("--beta-mi", type=float, default=_DEFAULTS.beta_mi)
    p.add_argument("--mi-variant", choices=[v.value for v in MiVariant], default=_DEFAULTS.mi_variant.value)
    p.add_argument("--embed-seed", type=int, default=None)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("demo", parents=[common], help="distill a teacher MLP into a student on blobs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--variant", choices=["itrd", "xent"], default="itrd")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_demo)
    return parser


def _setup_logging():
    level = os.environ.get("ITRD_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "epochs", 0) < 0:
        print("error: --epochs must be >= 0", file=sys.stderr)
        return EXIT_INPUT
    start = time.perf_counter()
    try:
        report = args.func(args)
    except (InputError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateKernelError, DomainError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MATH
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    report["command"] = args.command
    report["wall_time_s"] = round(time.perf_counter() - start, 6) if args.timing else 0.0
    text = dump_report(report)
    if args.command == "demo":
        if args.out is not None:
            args.out.write_text(text)
    else:
        sys.stdout.write(text)
    log.info("%s finished", args.command)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
