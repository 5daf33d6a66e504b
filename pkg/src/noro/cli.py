"""Command-line pipeline: synth-data, train, convert, eval-sv, eval-robustness."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import SEED_ENV_VAR, apply_seed_override, read_config


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noro",
                                description="noise-robust one-shot voice conversion")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth-data", help="generate the synthetic dataset")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--n-speakers", type=int, default=8)
    sp.add_argument("--utts", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)

    tp = sub.add_parser("train", help="train a baseline or noro checkpoint")
    tp.add_argument("--config", required=True, type=Path)
    tp.add_argument("--manifest", required=True, type=Path)
    tp.add_argument("--warm-start", type=Path, default=None)
    tp.add_argument("--out", required=True, type=Path)
    tp.add_argument("--metrics", type=Path, default=None,
                    help="JSON Lines metrics log (default: <out>.metrics.jsonl)")

    cp = sub.add_parser("convert", help="convert source speech to a reference timbre")
    cp.add_argument("--src", required=True, type=Path)
    cp.add_argument("--ref", required=True, type=Path)
    cp.add_argument("--ckpt", required=True, type=Path)
    cp.add_argument("--steps", type=int, default=100)
    cp.add_argument("--out", required=True, type=Path)

    ep = sub.add_parser("eval-sv", help="speaker-verification EER over a trial list")
    ep.add_argument("--ckpt", required=True, type=Path)
    ep.add_argument("--trials", required=True, type=Path)
    ep.add_argument("--out", required=True, type=Path)

    rp = sub.add_parser("eval-robustness", help="compare two checkpoints per SNR band")
    rp.add_argument("--ckpt-a", required=True, type=Path)
    rp.add_argument("--ckpt-b", required=True, type=Path)
    rp.add_argument("--manifest", required=True, type=Path)
    rp.add_argument("--out", required=True, type=Path)

    return p


def _run(args) -> None:
    if args.command == "synth-data":
        from .synth import synth_dataset
        manifest = synth_dataset(args.out, n_speakers=args.n_speakers,
                                 utts_per_speaker=args.utts, seed=args.seed)
        print(manifest)
    elif args.command == "train":
        from .training import train
        cfg = apply_seed_override(read_config(args.config))
        metrics = args.metrics or args.out.with_suffix(args.out.suffix + ".metrics.jsonl")
        train(cfg, args.manifest, args.out, warm_start=args.warm_start,
              metrics_path=metrics)
        print(args.out)
    elif args.command == "convert":
        from .inference import convert
        convert(args.src, args.ref, args.ckpt, n_steps=args.steps, out_path=args.out)
        print(args.out)
    elif args.command == "eval-sv":
        from .evaluate import eval_sv
        report = eval_sv(args.ckpt, args.trials, args.out)
        print(f"eer={report['eer']:.4f} threshold={report['threshold']:.4f}")
    elif args.command == "eval-robustness":
        from .evaluate import eval_robustness
        seed = int(os.environ.get(SEED_ENV_VAR, "0"))
        eval_robustness(args.ckpt_a, args.ckpt_b, args.manifest, args.out, seed=seed)
        print(args.out)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _run(args)
    except Exception as e:  # one-line diagnostic, nonzero exit
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
