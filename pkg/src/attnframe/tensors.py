"""Dense rank-3 tensors, their binary file format, and per-sequence manifests.

Tensors are plain numpy arrays of shape (channels, height, width), float32,
C-contiguous, so the in-memory layout is exactly the row-major flat array with
channel as the slowest axis. Files written here are bit-exact and portable:
everything is little-endian regardless of host byte order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"ATNT"
TENSOR_VERSION = 1
DTYPE_FLOAT32 = 1
TENSOR_RANK = 3

# magic, version u32, dtype u8, rank u8, dims 3 x u32 -- all little-endian
_HEADER = struct.Struct("<4sIBB3I")


class TensorFormatError(ValueError):
    """Raised for malformed tensor files or invalid tensor data."""


class ManifestError(ValueError):
    """Raised for structurally invalid sequence manifests."""


def validate_tensor(data: np.ndarray) -> np.ndarray:
    """Coerce `data` to a valid tensor: float32, rank 3, C-contiguous, finite.

    Returns the validated array (a copy only if coercion was needed).
    """
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != TENSOR_RANK:
        raise TensorFormatError(f"tensor must have rank 3, got shape {arr.shape}")
    if any(d < 1 for d in arr.shape):
        raise TensorFormatError(f"tensor dims must be positive, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise TensorFormatError("tensor contains NaN or Inf values")
    return arr


def write_tensor(t: np.ndarray, destination: str | Path) -> int:
    """Write a tensor to `destination` in the ATNT binary format.

    Layout: magic 'ATNT', version (u32, =1), dtype code (u8, 1 = float32),
    rank (u8, =3), dims C,H,W (3 x u32), then the raw little-endian float32
    payload. Returns the number of bytes written.
    """
    arr = validate_tensor(t)
    c, h, w = arr.shape
    header = _HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, DTYPE_FLOAT32, TENSOR_RANK, c, h, w)
    payload = arr.astype("<f4", copy=False).tobytes()
    with open(destination, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return len(header) + len(payload)


def read_tensor(source: str | Path) -> np.ndarray:
    """Read an ATNT tensor file back into a (C, H, W) float32 array.

    Rejects wrong magic/version/dtype/rank, truncated or oversized payloads,
    and non-finite values.
    """
    raw = Path(source).read_bytes()
    if len(raw) < _HEADER.size:
        raise TensorFormatError(f"{source}: file shorter than the tensor header")
    magic, version, dtype, rank, c, h, w = _HEADER.unpack_from(raw)
    if magic != TENSOR_MAGIC:
        raise TensorFormatError(f"{source}: bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
    if version != TENSOR_VERSION:
        raise TensorFormatError(f"{source}: unsupported format version {version}")
    if dtype != DTYPE_FLOAT32:
        raise TensorFormatError(f"{source}: unsupported dtype code {dtype}")
    if rank != TENSOR_RANK:
        raise TensorFormatError(f"{source}: unsupported rank {rank}")
    expected = 4 * c * h * w
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise TensorFormatError(
            f"{source}: payload is {len(payload)} bytes, header declares {expected}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(c, h, w)
    arr = arr.astype(np.float32, copy=True)
    if not np.isfinite(arr).all():
        raise TensorFormatError(f"{source}: tensor contains NaN or Inf values")
    return arr


@dataclass(frozen=True)
class FrameRecord:
    """One frame of a sequence: id, timestamp, and its tensor file pair."""

    frame_id: int
    timestamp: float
    activation_path: Path
    gradient_path: Path


@dataclass(frozen=True)
class SequenceManifest:
    sequence_name: str
    layer_id: str
    frames: list[FrameRecord]


def read_manifest(source: str | Path) -> SequenceManifest:
    """Load and validate a JSON sequence manifest.

    Relative tensor paths are resolved against the manifest's directory.
    Frame ids must be unique non-negative integers in strictly increasing
    order, with strictly increasing timestamps.
    """
    source = Path(source)
    try:
        doc = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"{source}: not valid JSON: {e}") from e

    for key in ("sequence_name", "layer_id", "frames"):
        if key not in doc:
            raise ManifestError(f"{source}: missing key {key!r}")
    raw_frames = doc["frames"]
    if not isinstance(raw_frames, list) or not raw_frames:
        raise ManifestError(f"{source}: 'frames' must be a non-empty list")

    base = source.parent
    frames: list[FrameRecord] = []
    for i, entry in enumerate(raw_frames):
        for key in ("frame_id", "timestamp", "activation_path", "gradient_path"):
            if key not in entry:
                raise ManifestError(f"{source}: frame {i} missing key {key!r}")
        frame_id = entry["frame_id"]
        if not isinstance(frame_id, int) or isinstance(frame_id, bool) or frame_id < 0:
            raise ManifestError(f"{source}: frame {i} has invalid frame_id {frame_id!r}")
        timestamp = float(entry["timestamp"])
        if not np.isfinite(timestamp):
            raise ManifestError(f"{source}: frame {i} has non-finite timestamp")
        frames.append(
            FrameRecord(
                frame_id=frame_id,
                timestamp=timestamp,
                activation_path=_resolve(base, entry["activation_path"]),
                gradient_path=_resolve(base, entry["gradient_path"]),
            )
        )

    ids = [f.frame_id for f in frames]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ManifestError(f"{source}: duplicate frame_id {dup}")
    for prev, cur in zip(frames, frames[1:]):
        if cur.frame_id <= prev.frame_id:
            raise ManifestError(
                f"{source}: frame_ids must be strictly increasing "
                f"({prev.frame_id} then {cur.frame_id})"
            )
        if cur.timestamp <= prev.timestamp:
            raise ManifestError(
                f"{source}: timestamps must be strictly increasing "
                f"({prev.timestamp} then {cur.timestamp})"
            )

    return SequenceManifest(
        sequence_name=str(doc["sequence_name"]),
        layer_id=str(doc["layer_id"]),
        frames=frames,
    )


def _resolve(base: Path, path: str | Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p
