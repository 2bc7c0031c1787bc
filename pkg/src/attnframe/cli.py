"""Command-line pipeline: encode manifests, associate frames, evaluate trajectories.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .association import (
    AssociationConfig,
    Keyframe,
    KeyframeStore,
    evaluate_retrieval,
    write_match_log,
)
from .encoder import (
    EncoderConfig,
    FrameDescriptor,
    encode,
    make_weights,
    read_descriptor_set,
    write_descriptor_set,
)
from .evaluation import alignment_residuals, associate, ate_rmse, parse_trajectory
from .fusion import FusionStrategy, fuse
from .tensors import read_manifest, read_tensor

_GT_MATCH_MAX_DIFF = 0.02


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="attnframe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_enc = sub.add_parser("encode", help="encode a tensor manifest into a descriptor set")
    p_enc.add_argument("--manifest", required=True, type=Path)
    p_enc.add_argument(
        "--strategy", required=True, choices=[s.value for s in FusionStrategy]
    )
    p_enc.add_argument("--seed", type=int, default=0)
    p_enc.add_argument("--out", required=True, type=Path)

    p_assoc = sub.add_parser("assoc", help="run loop-closure association over a descriptor set")
    p_assoc.add_argument("--descriptors", required=True, type=Path)
    p_assoc.add_argument("--window", type=float, default=30.0, help="temporal exclusion seconds")
    p_assoc.add_argument("--knn", type=int, default=5)
    p_assoc.add_argument("--alpha", type=float, default=1.0)
    p_assoc.add_argument("--gt", type=Path, default=None, help="TUM ground-truth trajectory")
    p_assoc.add_argument("--radius", type=float, default=1.0, help="positive-pair radius (m)")
    p_assoc.add_argument("--angle", type=float, default=30.0, help="positive-pair angle (deg)")
    p_assoc.add_argument("--out", required=True, type=Path, help="match log CSV")

    p_ate = sub.add_parser("ate", help="RMS absolute trajectory error between two trajectories")
    p_ate.add_argument("--est", required=True, type=Path)
    p_ate.add_argument("--gt", required=True, type=Path)
    p_ate.add_argument("--no-align", action="store_true", help="skip rigid alignment")
    p_ate.add_argument("--max-diff", type=float, default=0.02)
    p_ate.add_argument("--out", type=Path, default=None, help="per-pair error CSV")
    return parser


def _cmd_encode(args) -> int:
    started = time.perf_counter()
    manifest = read_manifest(args.manifest)
    cfg = EncoderConfig(seed=args.seed)
    weights = make_weights(cfg)
    strategy = FusionStrategy(args.strategy)

    records: list[FrameDescriptor] = []
    for frame in manifest.frames:
        try:
            activations = read_tensor(frame.activation_path)
            gradients = read_tensor(frame.gradient_path)
            if tuple(activations.shape) != cfg.expected_input_dims:
                raise ValueError(
                    f"activation dims {activations.shape} != expected {cfg.expected_input_dims}"
                )
            fused = fuse(activations, gradients, strategy)
            vector = encode(fused, weights, cfg)
        except (ValueError, OSError) as e:
            raise ValueError(f"frame {frame.frame_id}: {e}") from e
        records.append(
            FrameDescriptor(frame_id=frame.frame_id, timestamp=frame.timestamp, values=vector)
        )
        print(f"encoded frame {frame.frame_id} ({len(records)}/{len(manifest.frames)})",
              file=sys.stderr)
    write_descriptor_set(records, args.out)
    elapsed = time.perf_counter() - started
    print(f"{len(records)} frames in {elapsed:.2f}s", file=sys.stderr)
    print(f"wrote {len(records)} descriptors to {args.out}")
    return 0


def _attach_ground_truth(keyframes: list[Keyframe], gt_path: Path) -> list[Keyframe]:
    poses = parse_trajectory(gt_path)
    if not poses:
        raise ValueError(f"{gt_path}: ground-truth trajectory is empty")
    out = []
    for kf in keyframes:
        best = min(poses, key=lambda p: abs(p.timestamp - kf.timestamp))
        if abs(best.timestamp - kf.timestamp) > _GT_MATCH_MAX_DIFF:
            raise ValueError(
                f"frame {kf.frame_id}: no ground-truth pose within "
                f"{_GT_MATCH_MAX_DIFF}s of t={kf.timestamp}"
            )
        out.append(Keyframe(kf.frame_id, kf.timestamp, kf.descriptor, gt_pose=best))
    return out


def _cmd_assoc(args) -> int:
    records = read_descriptor_set(args.descriptors)
    if not records:
        raise ValueError(f"{args.descriptors}: descriptor set is empty")
    cfg = AssociationConfig(
        temporal_exclusion_window=args.window, knn=args.knn, alpha=args.alpha
    )
    keyframes = [
        Keyframe(frame_id=r.frame_id, timestamp=r.timestamp, descriptor=r.values)
        for r in sorted(records, key=lambda r: (r.timestamp, r.frame_id))
    ]
    if args.gt is not None:
        keyframes = _attach_ground_truth(keyframes, args.gt)

    store = KeyframeStore(cfg)
    matches = []
    for kf in keyframes:
        matches.extend(store.query(kf))
        store.insert(kf)

    if args.gt is not None:
        report = evaluate_retrieval(store, matches, radius_m=args.radius, angle_deg=args.angle)
        write_match_log(matches, args.out)
        print(
            f"precision={report.precision:.6f} recall={report.recall:.6f} "
            f"tp={report.tp_count} accepted={report.accepted_count} "
            f"eligible_queries={report.eligible_queries}"
        )
    else:
        write_match_log(matches, args.out)
    print(f"wrote {len(matches)} match records to {args.out}")
    return 0


def _cmd_ate(args) -> int:
    est = parse_trajectory(args.est)
    gt = parse_trajectory(args.gt)
    pairs = associate(est, gt, max_diff=args.max_diff)
    aligned = not args.no_align
    rmse = ate_rmse(pairs, aligned=aligned)
    print(f"rmse_m={rmse:.6f} pairs={len(pairs)}")
    if args.out is not None:
        residuals = alignment_residuals(pairs, aligned=aligned)
        lines = ["est_timestamp,gt_timestamp,gap,error_m"]
        for pair, err in zip(pairs, residuals):
            lines.append(f"{pair.est.timestamp!r},{pair.gt.timestamp!r},{pair.gap!r},{err!r}")
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"encode": _cmd_encode, "assoc": _cmd_assoc, "ate": _cmd_ate}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as e:
        print(f"attnframe {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
