"""Versioned named-array checkpoint container.

Layout: 8-byte magic, u32 version, u64 header length, a JSON header
(config snapshot, training step, array index), then raw little-endian
float64 payloads. Arrays are written in sorted name order and the header
JSON is canonicalized, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import TrainConfig

MAGIC = b"NOROCKPT"
VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], cfg: TrainConfig, step: int):
    names = sorted(arrays)
    index = []
    offset = 0
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
        raw = arr.tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset,
                      "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps({"config": cfg.asdict(), "step": int(step), "arrays": index},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in payloads:
            f.write(raw)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], TrainConfig, int]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    version = struct.unpack("<I", blob[8:12])[0]
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header_len = struct.unpack("<Q", blob[12:20])[0]
    header = json.loads(blob[20:20 + header_len].decode())
    base = 20 + header_len
    arrays: dict[str, np.ndarray] = {}
    for rec in header["arrays"]:
        start = base + rec["offset"]
        raw = blob[start:start + rec["nbytes"]]
        arrays[rec["name"]] = np.frombuffer(raw, dtype=np.float64).reshape(
            rec["shape"]).copy()
    cfg = TrainConfig(**header["config"])
    return arrays, cfg, int(header["step"])
