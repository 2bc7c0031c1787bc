"""Extraction command line: TUM sequence in, tensor files + manifest out.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .tum import extract_sequence
from .vgg import ExtractionConfig, VggAttentionExtractor


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="attnextract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("extract", help="extract activation/gradient tensors from a TUM sequence")
    p.add_argument("--seq", required=True, type=Path, help="TUM sequence directory")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--limit", type=int, default=None, help="process at most N frames")
    p.add_argument("--layer", default="vgg16.block5.pool")
    p.add_argument("--weights", default="imagenet",
                   help='"imagenet", "random", or a state-dict file path')
    p.add_argument("--seed", type=int, default=0, help="init seed for --weights random")
    p.add_argument("--device", default="cpu")
    return parser


def _cmd_extract(args) -> int:
    cfg = ExtractionConfig(
        layer_id=args.layer, weights=args.weights, seed=args.seed, device=args.device
    )
    extractor = VggAttentionExtractor(cfg)
    started = time.perf_counter()

    def progress(done, total):
        print(f"extracted {done}/{total}", file=sys.stderr)

    manifest = extract_sequence(extractor, args.seq, args.out, limit=args.limit,
                                progress=progress)
    elapsed = time.perf_counter() - started
    print(f"extraction finished in {elapsed:.1f}s", file=sys.stderr)
    print(f"wrote manifest to {manifest}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _cmd_extract(args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"attnextract {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
