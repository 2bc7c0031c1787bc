"""Writer for the ATNT tensor interchange format.

Implemented independently of the consumer toolkit so the two sides only share
the wire format: magic 'ATNT', version u32 (=1), dtype u8 (1 = float32),
rank u8 (=3), dims C,H,W as 3 x u32, then the raw little-endian float32
payload. Everything little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIBB3I")


def write_tensor(data: np.ndarray, destination: str | Path) -> int:
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != 3:
        raise ValueError(f"tensor must have rank 3, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("tensor contains NaN or Inf values")
    c, h, w = arr.shape
    header = _HEADER.pack(b"ATNT", 1, 1, 3, c, h, w)
    payload = arr.astype("<f4", copy=False).tobytes()
    with open(destination, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return len(header) + len(payload)
