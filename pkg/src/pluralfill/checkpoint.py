"""Single-file checkpoint container.

Layout: 8-byte magic, u64 little-endian manifest length, UTF-8 JSON manifest,
then the concatenated float32 little-endian row-major array payloads. The
manifest carries arbitrary JSON metadata (config, step, PRNG state) plus the
name/shape/offset of every array. Loads reproduce saved bytes exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PLFCKPT1"


def save_checkpoint(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    payloads = []
    offset = 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f4")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        payloads.append(a.tobytes())  # C order regardless of input layout
        offset += a.nbytes
    manifest = json.dumps({"meta": meta, "arrays": entries},
                          sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
        for p in payloads:
            f.write(p)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (mlen,) = struct.unpack("<Q", raw[8:16])
    manifest = json.loads(raw[16 : 16 + mlen].decode("utf-8"))
    base = 16 + mlen
    arrays = {}
    for e in manifest["arrays"]:
        n = int(np.prod(e["shape"], dtype=np.int64)) if e["shape"] else 1
        start = base + e["offset"]
        buf = raw[start : start + 4 * n]
        arrays[e["name"]] = np.frombuffer(buf, dtype="<f4").reshape(e["shape"]).copy()
    return manifest["meta"], arrays
