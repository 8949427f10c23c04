"""Writer for the SUMFEAT1 embedding container.

Implemented against the documented byte layout rather than by importing the
summarization package: magic ``SUMFEAT1``, u32 little-endian header length,
UTF-8 JSON header {video_id, kind, rows, dim, fps}, then rows*dim
little-endian float32 values in row-major order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"SUMFEAT1"
KINDS = ("frames", "captions", "query")


def write_sumfeat(path: str | Path, video_id: str, kind: str,
                  embeddings: np.ndarray, fps: float = 0.0) -> None:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    emb = np.ascontiguousarray(embeddings, dtype="<f4")
    if emb.ndim != 2 or emb.shape[0] < 1 or emb.shape[1] < 1:
        raise ValueError(f"embeddings must be a non-empty 2-D matrix, got {emb.shape}")
    if kind == "query" and emb.shape[0] != 1:
        raise ValueError("query files hold exactly one row")
    if not np.isfinite(emb).all():
        raise ValueError("embeddings contain non-finite values")
    header = json.dumps({
        "video_id": video_id,
        "kind": kind,
        "rows": int(emb.shape[0]),
        "dim": int(emb.shape[1]),
        "fps": float(fps),
    }, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(emb.tobytes())
