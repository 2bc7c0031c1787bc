"""Compact frame descriptors from fused CNN features via fixed random networks.

The encoding chain for a (512, 7, 7) feature tensor:

  1. average every channel pair            -> (256, 7, 7)
  2. re-grid each cell's 256-vector into a
     2x2 spatial sub-block of 64-vectors   -> (64, 14, 14)
  3. flatten the 196 cell vectors row-major and, for each of 16 fixed random
     networks, take tanh(W_r @ x)          -> 16 x 64 = 1024 values

The weight matrices are untrained, drawn uniform on [-1, 1] from a
counter-based generator keyed by (seed, network index), so descriptors are
reproducible across runs and platforms. tanh keeps every descriptor element
inside the open interval (-1, 1); values are clamped to the widest float32
sub-interval so saturation can never round them to exactly +-1.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DESCRIPTOR_SET_MAGIC = b"ATDS"
DESCRIPTOR_SET_VERSION = 1

# widest float32 value strictly below 1.0
_OPEN_UNIT_LIMIT = np.nextafter(np.float32(1.0), np.float32(0.0))

_FILE_HEADER = struct.Struct("<4sII")
_RECORD_HEADER = struct.Struct("<QdI")


class DescriptorSetError(ValueError):
    """Raised for malformed descriptor-set files."""


@dataclass(frozen=True)
class EncoderConfig:
    num_rnns: int = 16
    k: int = 64
    seed: int = 0
    expected_input_dims: tuple[int, int, int] = (512, 7, 7)

    def __post_init__(self):
        if self.num_rnns < 1:
            raise ValueError("num_rnns must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def descriptor_length(self) -> int:
        return self.num_rnns * self.k


@dataclass(frozen=True)
class RandomRnnWeights:
    """Stacked per-network weight matrices, shape (num_rnns, k, k * cells)."""

    matrices: np.ndarray
    seed: int

    @property
    def stacked(self) -> np.ndarray:
        n, k, width = self.matrices.shape
        return self.matrices.reshape(n * k, width)


@dataclass(frozen=True)
class FrameDescriptor:
    frame_id: int
    timestamp: float
    values: np.ndarray = field(repr=False)


def channel_pair_pool(f: np.ndarray) -> np.ndarray:
    """Average adjacent channel pairs: out[c] = (f[2c] + f[2c+1]) / 2."""
    c = f.shape[0]
    if c % 2 != 0:
        raise ValueError(f"channel count must be even, got {c}")
    return (f[0::2] + f[1::2]) * np.float32(0.5)


def regrid(f: np.ndarray) -> np.ndarray:
    """Re-grid (256, 7, 7) to (64, 14, 14) without losing any values.

    The 256-vector at spatial cell (h, w) is split into four contiguous
    64-chunks q = 0..3; chunk q becomes the 64-vector of output cell
    (2h + q // 2, 2w + q % 2).
    """
    if f.shape != (256, 7, 7):
        raise ValueError(f"regrid expects dims (256, 7, 7), got {f.shape}")
    # (q_row, q_col, chunk, h, w) -> (chunk, h, q_row, w, q_col)
    blocks = f.reshape(2, 2, 64, 7, 7)
    return np.ascontiguousarray(blocks.transpose(2, 3, 0, 4, 1)).reshape(64, 14, 14)


def _flattened_length(cfg: EncoderConfig) -> int:
    c, h, w = cfg.expected_input_dims
    return (c // 2) * h * w


def _weights_rng(seed: int, rnn_index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, rnn_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def make_weights(cfg: EncoderConfig) -> RandomRnnWeights:
    """Generate the fixed random weight matrices for `cfg`.

    Entries are i.i.d. uniform on [-1, 1], drawn from a Philox counter-based
    generator keyed by (seed, network index): bit-identical on every run and
    platform.
    """
    width = _flattened_length(cfg)
    mats = np.empty((cfg.num_rnns, cfg.k, width), dtype=np.float64)
    for r in range(cfg.num_rnns):
        rng = _weights_rng(cfg.seed, r)
        mats[r] = rng.uniform(-1.0, 1.0, size=(cfg.k, width))
    return RandomRnnWeights(matrices=mats, seed=cfg.seed)


def encode(f: np.ndarray, w: RandomRnnWeights, cfg: EncoderConfig) -> np.ndarray:
    """Encode a fused feature tensor into a descriptor of length num_rnns * k.

    The pooled and re-gridded tensor is flattened cell by cell in row-major
    spatial order, each cell contributing its 64-vector contiguously; each
    network's output is tanh(W_r @ x) and the outputs are concatenated.
    """
    if tuple(f.shape) != cfg.expected_input_dims:
        raise ValueError(f"expected dims {cfg.expected_input_dims}, got {tuple(f.shape)}")
    grid = regrid(channel_pair_pool(f))
    x = grid.transpose(1, 2, 0).reshape(-1).astype(np.float64)
    z = w.stacked @ x
    out = np.tanh(z).astype(np.float32)
    return np.clip(out, -_OPEN_UNIT_LIMIT, _OPEN_UNIT_LIMIT)


def write_descriptor_set(records: list[FrameDescriptor], destination: str | Path) -> int:
    """Write descriptors to an ATDS file; returns bytes written.

    Each record is frame_id (u64), timestamp (f64), length (u32), then the
    float32 little-endian descriptor payload.
    """
    chunks = [_FILE_HEADER.pack(DESCRIPTOR_SET_MAGIC, DESCRIPTOR_SET_VERSION, len(records))]
    for rec in records:
        values = np.ascontiguousarray(rec.values, dtype="<f4")
        if values.ndim != 1:
            raise ValueError(f"frame {rec.frame_id}: descriptor must be a flat vector")
        chunks.append(_RECORD_HEADER.pack(rec.frame_id, rec.timestamp, values.size))
        chunks.append(values.tobytes())
    data = b"".join(chunks)
    Path(destination).write_bytes(data)
    return len(data)


def read_descriptor_set(source: str | Path) -> list[FrameDescriptor]:
    """Read an ATDS descriptor-set file back into FrameDescriptor records."""
    raw = Path(source).read_bytes()
    if len(raw) < _FILE_HEADER.size:
        raise DescriptorSetError(f"{source}: file shorter than the header")
    magic, version, count = _FILE_HEADER.unpack_from(raw)
    if magic != DESCRIPTOR_SET_MAGIC:
        raise DescriptorSetError(f"{source}: bad magic {magic!r}")
    if version != DESCRIPTOR_SET_VERSION:
        raise DescriptorSetError(f"{source}: unsupported version {version}")
    offset = _FILE_HEADER.size
    records: list[FrameDescriptor] = []
    for _ in range(count):
        if offset + _RECORD_HEADER.size > len(raw):
            raise DescriptorSetError(f"{source}: truncated record header")
        frame_id, timestamp, length = _RECORD_HEADER.unpack_from(raw, offset)
        offset += _RECORD_HEADER.size
        end = offset + 4 * length
        if end > len(raw):
            raise DescriptorSetError(f"{source}: truncated descriptor payload")
        values = np.frombuffer(raw[offset:end], dtype="<f4").astype(np.float32)
        offset = end
        records.append(FrameDescriptor(frame_id=frame_id, timestamp=timestamp, values=values))
    if offset != len(raw):
        raise DescriptorSetError(f"{source}: {len(raw) - offset} trailing bytes")
    return records
