"""Command-line entry points.

Exit codes: 0 success, 2 unknown command / bad arguments, 3 config parse
failure, 4 data errors. Every command is deterministic for a fixed --seed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .config import PipelineConfig, from_file
from .errors import ConfigError, DataError, SpliceLocError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4


def _load_config(args) -> PipelineConfig:
    cfg = from_file(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "jobs", None) is not None:
        cfg = replace(cfg, jobs=args.jobs)
    return cfg


def _common(p):
    p.add_argument("--config", help="INI config file (defaults are built in)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--jobs", type=int, help="worker processes for per-utterance stages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spliceloc",
        description="Forge spliced-audio corpora, localize manipulated regions, "
                    "and evaluate the results.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forge", help="synthesize a labeled corpus + manifest")
    _common(p)
    p.add_argument("--out-dir", help="corpus output directory")

    p = sub.add_parser("train-scorer", help="train the baseline frame scorer")
    _common(p)
    p.add_argument("--task", choices=("boundary", "spoof"), required=True)
    p.add_argument("--manifest")
    p.add_argument("--models-dir")

    p = sub.add_parser("train-vae", help="fit PCA + VAE on genuine frames")
    _common(p)
    p.add_argument("--manifest")
    p.add_argument("--models-dir")

    p = sub.add_parser("score", help="emit merged score files per utterance")
    _common(p)
    p.add_argument("--manifest")
    p.add_argument("--models-dir")
    p.add_argument("--scores-dir", help="output directory for score files")

    p = sub.add_parser("locate", help="detect boundaries, fuse, write a submission")
    _common(p)
    p.add_argument("--manifest")
    p.add_argument("--models-dir")
    p.add_argument("--scores-dir", help="consume external score files instead of models")
    p.add_argument("--out-dir")

    p = sub.add_parser("evaluate", help="score a submission against the manifest")
    _common(p)
    p.add_argument("--manifest")
    p.add_argument("--submission", required=True)
    p.add_argument("--boundary-scores")
    p.add_argument("--out-dir")
    p.add_argument("--no-figures", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        paths = cfg.paths
        if args.command == "forge":
            out = args.out_dir or paths.corpus_dir
            entries = pipeline.run_forge(cfg, out)
            print(f"forged {len(entries)} utterances into {out}")
        elif args.command == "train-scorer":
            loss = pipeline.run_train_scorer(
                cfg, args.task, args.manifest or paths.manifest,
                args.models_dir or paths.models_dir)
            print(f"trained {args.task} scorer, final loss {loss:.4f}")
        elif args.command == "train-vae":
            elbo = pipeline.run_train_vae(
                cfg, args.manifest or paths.manifest,
                args.models_dir or paths.models_dir)
            print(f"trained density model, final ELBO {elbo:.4f}")
        elif args.command == "score":
            written = pipeline.run_score(
                cfg, args.manifest or paths.manifest,
                args.models_dir or paths.models_dir,
                args.scores_dir or paths.scores_dir or Path(paths.output_dir) / "scores")
            print(f"wrote {len(written)} score files")
        elif args.command == "locate":
            scores_dir = args.scores_dir or (paths.scores_dir or None)
            models_dir = args.models_dir or paths.models_dir
            out = args.out_dir or paths.output_dir
            verdicts = pipeline.run_locate(cfg, args.manifest or paths.manifest, out,
                                           models_dir=models_dir, scores_dir=scores_dir)
            print(f"located {len(verdicts)} utterances -> {out}/submission.tsv")
        elif args.command == "evaluate":
            out = args.out_dir or paths.output_dir
            report = pipeline.run_evaluate(
                cfg, args.manifest or paths.manifest, args.submission, out,
                boundary_scores_path=args.boundary_scores,
                figures=not args.no_figures)
            for line in (Path(out) / "report.txt").read_text().splitlines():
                print(line)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SpliceLocError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
