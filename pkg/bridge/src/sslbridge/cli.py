"""Bridge CLI: export score files for a manifest."""

from __future__ import annotations

import argparse
import sys

from .backbone import BackboneError
from .bridge import BridgeConfig, export_scores, load_config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sslbridge")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export-scores", help="train heads and write score files")
    p.add_argument("--config", help="INI file with a [bridge] section")
    p.add_argument("--manifest", required=True, help="corpus to export scores for")
    p.add_argument("--train-manifest", help="separate training corpus (defaults to --manifest)")
    p.add_argument("--out-dir")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else BridgeConfig()
        written = export_scores(cfg, args.manifest, out_dir=args.out_dir,
                                train_manifest_path=args.train_manifest)
        print(f"wrote {len(written)} score files")
        return 0
    except (BackboneError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
