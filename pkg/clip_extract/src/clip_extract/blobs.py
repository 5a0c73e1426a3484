"""The HGNNEMB1 embedding-blob format.

Little-endian: 8-byte magic, u32 vector count, u32 dim, then count*dim
float32 values. This mirrors the consumer's published format byte for byte;
blobs written here load into the training package with zero conversion loss.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"HGNNEMB1"


class BlobFormatError(ValueError):
    pass


def write_blob(vectors: Sequence[np.ndarray], path: str | Path) -> None:
    vectors = [np.asarray(v, dtype="<f4") for v in vectors]
    dims = {v.shape[0] for v in vectors}
    if len(dims) > 1:
        raise ValueError(f"write_blob: mixed dims {sorted(dims)}")
    dim = dims.pop() if dims else 0
    payload = np.stack(vectors) if vectors else np.zeros((0, 0), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", len(vectors), dim))
        fh.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())


def read_blob(path: str | Path) -> list[np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise BlobFormatError(f"{path}: not an HGNNEMB1 blob")
    count, dim = struct.unpack_from("<II", raw, len(MAGIC))
    if len(raw) != len(MAGIC) + 8 + count * dim * 4:
        raise BlobFormatError(f"{path}: truncated payload")
    data = np.frombuffer(raw, dtype="<f4", offset=len(MAGIC) + 8)
    return [data[i * dim : (i + 1) * dim].copy() for i in range(count)]
