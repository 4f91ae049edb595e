"""Manifest + flat-binary file formats.

Every artifact (dataset, generator weights, cache dump) is a pair of files:
a UTF-8 JSON manifest carrying dims, counts, a dtype tag, the companion
binary's name and its SHA-256, plus a little-endian binary of the raw
values in row-major order.  Datasets and weights are stored as ``<f4``;
cache dumps keep full ``<f8`` precision so a resumed run is bit-identical
to an uninterrupted one.

Loads validate everything they can and raise :class:`ManifestError` naming
the offending field (truncations report the byte offset).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .generator import GeneratorModel
from .semcache import CacheMemory

FORMAT_VERSION = 1


class ManifestError(ValueError):
    """A manifest/binary pair failed validation; message names the field."""


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_pair(base: Path, manifest: dict, blob: bytes) -> tuple[Path, Path]:
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    bin_path = base.with_suffix(".bin")
    manifest = dict(manifest)
    manifest["version"] = FORMAT_VERSION
    manifest["binary"] = bin_path.name
    manifest["byte_length"] = len(blob)
    manifest["sha256"] = _sha256(blob)
    bin_path.write_bytes(blob)
    man_path = base.with_suffix(".json")
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")
    return man_path, bin_path


def _read_pair(manifest_path: Path, expected_format: str) -> tuple[dict, bytes]:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {manifest_path}: {exc}")
    for key in ("format", "version", "binary", "byte_length", "sha256", "dtype"):
        if key not in manifest:
            raise ManifestError(f"manifest missing field '{key}'")
    if manifest["format"] != expected_format:
        raise ManifestError(
            f"field 'format': expected '{expected_format}', got '{manifest['format']}'"
        )
    if manifest["version"] != FORMAT_VERSION:
        raise ManifestError(f"field 'version': unsupported value {manifest['version']}")
    bin_path = manifest_path.parent / manifest["binary"]
    try:
        blob = bin_path.read_bytes()
    except OSError as exc:
        raise ManifestError(f"cannot read binary {bin_path}: {exc}")
    if len(blob) != manifest["byte_length"]:
        raise ManifestError(
            f"binary truncated at byte {len(blob)}, expected {manifest['byte_length']}"
        )
    if _sha256(blob) != manifest["sha256"]:
        raise ManifestError("field 'sha256': checksum mismatch")
    return manifest, blob


# ---------------------------------------------------------------------------
# Datasets: n latent matrices, optionally followed by n images.
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    latents: np.ndarray  # (count, n_slots, slot_len) float32
    images: np.ndarray | None = None  # (count, 3, height, width) float32


def save_dataset(base: str | Path, latents: np.ndarray, images: np.ndarray | None = None):
    """Write a dataset pair; values are stored as little-endian float32."""
    latents = np.ascontiguousarray(latents, dtype="<f4")
    if latents.ndim != 3:
        raise ValueError(f"latents must be (count, n_slots, slot_len), got {latents.shape}")
    count, n_slots, slot_len = latents.shape
    manifest = {
        "format": "semcomsim-dataset",
        "dtype": "<f4",
        "count": count,
        "n_slots": n_slots,
        "slot_len": slot_len,
        "has_images": images is not None,
    }
    blob = latents.tobytes()
    if images is not None:
        images = np.ascontiguousarray(images, dtype="<f4")
        if images.ndim != 4 or images.shape[0] != count or images.shape[1] != 3:
            raise ValueError(f"images must be (count, 3, H, W), got {images.shape}")
        manifest["height"] = images.shape[2]
        manifest["width"] = images.shape[3]
        blob += images.tobytes()
    return _write_pair(Path(base), manifest, blob)


def load_dataset(manifest_path: str | Path) -> Dataset:
    manifest, blob = _read_pair(Path(manifest_path), "semcomsim-dataset")
    if manifest["dtype"] != "<f4":
        raise ManifestError(f"field 'dtype': expected '<f4', got '{manifest['dtype']}'")
    count = int(manifest["count"])
    n_slots = int(manifest["n_slots"])
    slot_len = int(manifest["slot_len"])
    if count < 1 or n_slots < 1 or slot_len < 1:
        raise ManifestError("field 'count'/'n_slots'/'slot_len': must be positive")
    if slot_len % 2 != 0:
        raise ManifestError(f"field 'slot_len': must be even, got {slot_len}")
    lat_bytes = count * n_slots * slot_len * 4
    expected = lat_bytes
    img_shape = None
    if manifest["has_images"]:
        for key in ("height", "width"):
            if key not in manifest:
                raise ManifestError(f"manifest missing field '{key}'")
        img_shape = (count, 3, int(manifest["height"]), int(manifest["width"]))
        expected += count * 3 * img_shape[2] * img_shape[3] * 4
    if len(blob) != expected:
        raise ManifestError(
            f"binary truncated at byte {len(blob)}, expected {expected} "
            "for the declared shapes"
        )
    latents = np.frombuffer(blob[:lat_bytes], dtype="<f4").reshape(count, n_slots, slot_len)
    images = None
    if img_shape is not None:
        images = np.frombuffer(blob[lat_bytes:], dtype="<f4").reshape(img_shape)
    return Dataset(latents=latents.copy(), images=None if images is None else images.copy())


# ---------------------------------------------------------------------------
# Generator weights: manifest with kind/dims/layer spec, binary of W then b
# per layer in order.
# ---------------------------------------------------------------------------


def save_generator(base: str | Path, model: GeneratorModel):
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    manifest = {
        "format": "semcomsim-generator",
        "dtype": "<f4",
        "kind": model.kind,
        "n_slots": model.n_slots,
        "slot_len": model.slot_len,
        "height": model.height,
        "width": model.width,
        "hidden": list(model.hidden),
    }
    return _write_pair(Path(base), manifest, b"".join(parts))


def load_generator(manifest_path: str | Path) -> GeneratorModel:
    manifest, blob = _read_pair(Path(manifest_path), "semcomsim-generator")
    if manifest["dtype"] != "<f4":
        raise ManifestError(f"field 'dtype': expected '<f4', got '{manifest['dtype']}'")
    for key in ("kind", "n_slots", "slot_len", "height", "width", "hidden"):
        if key not in manifest:
            raise ManifestError(f"manifest missing field '{key}'")
    n_slots, slot_len = int(manifest["n_slots"]), int(manifest["slot_len"])
    height, width = int(manifest["height"]), int(manifest["width"])
    hidden = tuple(int(h) for h in manifest["hidden"])
    dims = [n_slots * slot_len, *hidden, 3 * height * width]
    weights, biases = [], []
    offset = 0
    for layer in range(len(dims) - 1):
        for shape in ((dims[layer + 1], dims[layer]), (dims[layer + 1],)):
            nbytes = int(np.prod(shape)) * 4
            if offset + nbytes > len(blob):
                raise ManifestError(
                    f"binary truncated at byte {len(blob)}, expected at least "
                    f"{offset + nbytes} for layer {layer}"
                )
            arr = np.frombuffer(blob[offset : offset + nbytes], dtype="<f4")
            offset += nbytes
            if len(shape) == 2:
                weights.append(arr.reshape(shape).astype(np.float64))
            else:
                biases.append(arr.astype(np.float64))
    if offset != len(blob):
        raise ManifestError(f"binary has {len(blob) - offset} trailing bytes")
    return GeneratorModel(
        kind=str(manifest["kind"]),
        n_slots=n_slots,
        slot_len=slot_len,
        height=height,
        width=width,
        weights=weights,
        biases=biases,
        hidden=hidden,
    )


# ---------------------------------------------------------------------------
# Cache dumps: per-slot logical order plus insertion counters, full float64.
# ---------------------------------------------------------------------------


def save_cache(base: str | Path, cache: CacheMemory):
    parts = []
    occupancies = []
    for i in range(cache.n_slots):
        entries = cache.entries(i)
        occupancies.append(len(entries))
        for vec in entries:
            parts.append(np.ascontiguousarray(vec, dtype="<f8").tobytes())
    manifest = {
        "format": "semcomsim-cache",
        "dtype": "<f8",
        "n_slots": cache.n_slots,
        "capacity": cache.capacity,
        "slot_len": cache.slot_len,
        "occupancies": occupancies,
        "insert_counts": [cache.insert_count(i) for i in range(cache.n_slots)],
    }
    return _write_pair(Path(base), manifest, b"".join(parts))


def load_cache(manifest_path: str | Path) -> CacheMemory:
    manifest, blob = _read_pair(Path(manifest_path), "semcomsim-cache")
    if manifest["dtype"] != "<f8":
        raise ManifestError(f"field 'dtype': expected '<f8', got '{manifest['dtype']}'")
    for key in ("n_slots", "capacity", "slot_len", "occupancies", "insert_counts"):
        if key not in manifest:
            raise ManifestError(f"manifest missing field '{key}'")
    n_slots = int(manifest["n_slots"])
    capacity = int(manifest["capacity"])
    slot_len = int(manifest["slot_len"])
    occupancies = [int(o) for o in manifest["occupancies"]]
    counts = [int(c) for c in manifest["insert_counts"]]
    if len(occupancies) != n_slots or len(counts) != n_slots:
        raise ManifestError("field 'occupancies'/'insert_counts': wrong length")
    if any(o > capacity or o < 0 for o in occupancies):
        raise ManifestError("field 'occupancies': entry exceeds capacity")
    expected = sum(occupancies) * slot_len * 8
    if len(blob) != expected:
        raise ManifestError(f"binary truncated at byte {len(blob)}, expected {expected}")
    cache = CacheMemory(n_slots, capacity, slot_len)
    offset = 0
    for i, occ in enumerate(occupancies):
        for _ in range(occ):
            vec = np.frombuffer(blob[offset : offset + slot_len * 8], dtype="<f8")
            cache.insert(i, vec)
            offset += slot_len * 8
    cache._inserted = counts
    return cache
