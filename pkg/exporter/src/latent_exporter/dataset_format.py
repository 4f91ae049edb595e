"""Writer for the simulator's dataset file pair.

This mirrors the published interface of the simulator's loader: a JSON
manifest (dims, counts, dtype tag, binary name, byte length, SHA-256) next
to a flat little-endian float32 binary in row-major order.  The exporter
deliberately does not import the simulator; the file format is the
contract between the two components.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def write_dataset(base: str | Path, latents: np.ndarray) -> tuple[Path, Path]:
    latents = np.ascontiguousarray(latents, dtype="<f4")
    if latents.ndim != 3:
        raise ValueError(f"latents must be (count, n_slots, slot_len), got {latents.shape}")
    count, n_slots, slot_len = latents.shape
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    bin_path = base.with_suffix(".bin")
    blob = latents.tobytes()
    bin_path.write_bytes(blob)
    manifest = {
        "format": "semcomsim-dataset",
        "version": FORMAT_VERSION,
        "dtype": "<f4",
        "count": count,
        "n_slots": n_slots,
        "slot_len": slot_len,
        "has_images": False,
        "binary": bin_path.name,
        "byte_length": len(blob),
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    man_path = base.with_suffix(".json")
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")
    return man_path, bin_path
