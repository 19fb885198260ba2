"""Deterministic single-file archive: a JSON manifest plus raw named arrays.

Layout:  magic | uint64 manifest length | manifest JSON | array blobs.
Keys are sorted and blobs are concatenated in name order, so identical
content always produces identical bytes (save -> load -> save round-trips
losslessly).
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TXAV0001"


def save_archive(path, manifest, arrays):
    """Write `arrays` (name -> ndarray) with `manifest` (JSON-serializable)."""
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str,
                        "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    doc = dict(manifest)
    doc["arrays"] = entries
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)
        for b in blobs:
            f.write(b)


def load_archive(path):
    """Returns (manifest, arrays dict)."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError("not a texavatar archive: %s" % path)
        (n,) = struct.unpack("<Q", f.read(8))
        doc = json.loads(f.read(n).decode())
        base = f.tell()
        arrays = {}
        for e in doc.pop("arrays"):
            f.seek(base + e["offset"])
            raw = f.read(e["nbytes"])
            arrays[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])) \
                .reshape(e["shape"]).copy()
    return doc, arrays
