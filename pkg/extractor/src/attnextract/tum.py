"""TUM RGB-D sequence ingestion: rgb.txt parsing, batch extraction, manifests."""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

from .tensor_files import write_tensor
from .vgg import VggAttentionExtractor


class SequenceLayoutError(ValueError):
    """Raised when a sequence directory lacks the expected TUM layout."""


@dataclass(frozen=True)
class TumFrame:
    timestamp: float
    rgb_path: Path


def read_rgb_index(sequence_dir: str | Path) -> list[TumFrame]:
    """Parse rgb.txt (lines 'timestamp relative/path', '#' comments allowed)."""
    sequence_dir = Path(sequence_dir)
    index = sequence_dir / "rgb.txt"
    if not index.is_file():
        raise SequenceLayoutError(f"{sequence_dir}: no rgb.txt; not a TUM sequence?")
    frames: list[TumFrame] = []
    for lineno, line in enumerate(index.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise SequenceLayoutError(f"{index}:{lineno}: expected 'timestamp path'")
        frames.append(TumFrame(timestamp=float(parts[0]), rgb_path=sequence_dir / parts[1]))
    if not frames:
        raise SequenceLayoutError(f"{index}: no frames listed")
    for prev, cur in zip(frames, frames[1:]):
        if cur.timestamp <= prev.timestamp:
            raise SequenceLayoutError(
                f"{index}: timestamps not strictly increasing at t={cur.timestamp}"
            )
    return frames


def extract_sequence(
    extractor: VggAttentionExtractor,
    sequence_dir: str | Path,
    out_dir: str | Path,
    limit: int | None = None,
    progress=None,
) -> Path:
    """Extract (L, G) pairs for every RGB frame and write tensors plus manifest.

    Ground truth, when present, is copied through untouched for the evaluation
    tooling. Returns the manifest path.
    """
    sequence_dir = Path(sequence_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = read_rgb_index(sequence_dir)
    if limit is not None:
        frames = frames[:limit]

    records = []
    for i, frame in enumerate(frames):
        activations, gradients = extractor.extract_pair(frame.rgb_path)
        act_name = f"act_{i:06d}.atnt"
        grad_name = f"grad_{i:06d}.atnt"
        write_tensor(activations, out_dir / act_name)
        write_tensor(gradients, out_dir / grad_name)
        records.append(
            {
                "frame_id": i,
                "timestamp": frame.timestamp,
                "activation_path": act_name,
                "gradient_path": grad_name,
            }
        )
        if progress is not None:
            progress(i + 1, len(frames))

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(
            {
                "sequence_name": sequence_dir.name,
                "layer_id": extractor.cfg.layer_id,
                "frames": records,
            },
            indent=1,
        )
    )
    groundtruth = sequence_dir / "groundtruth.txt"
    if groundtruth.is_file():
        shutil.copyfile(groundtruth, out_dir / "groundtruth.txt")
    return manifest_path
