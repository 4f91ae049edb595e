"""Core latent types, power normalization, and real<->complex symbol packing.

Conventions fixed here and relied on everywhere else:

* Power normalization scales a real vector to unit mean-square per real
  dimension (``mean(w**2) == 1``).  A complex block packed from a
  normalized vector therefore carries an average of 2 units of power per
  complex symbol (two unit-power real components each).
* Packing is interleaved: even index -> real part, odd index -> imaginary
  part.  It is bit-exact and lossless, which cache-synchronization checks
  depend on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SemanticLatent:
    """An n_slots x slot_len real matrix; each row is one semantic vector."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"latent must be a 2-d matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite latent")
        object.__setattr__(self, "data", arr)

    @property
    def n_slots(self) -> int:
        return self.data.shape[0]

    @property
    def slot_len(self) -> int:
        return self.data.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.data[i]


@dataclass(frozen=True)
class ComplexBlock:
    """A block of complex channel symbols."""

    symbols: np.ndarray

    def __post_init__(self):
        arr = np.array(self.symbols, dtype=np.complex128, copy=True)
        if arr.ndim != 1:
            raise ValueError(f"symbol block must be 1-d, got shape {arr.shape}")
        object.__setattr__(self, "symbols", arr)

    @property
    def length(self) -> int:
        return self.symbols.shape[0]


@dataclass(frozen=True)
class Image:
    """A 3 x height x width image with pixel values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[0] != 3 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"image must have shape (3, H, W), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite pixels")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


def power_normalize(v: np.ndarray) -> tuple[np.ndarray, float]:
    """Scale ``v`` so its mean square is 1; returns (scaled, scale).

    Works on arrays of any shape (normalized over all entries).  An
    all-zero input is returned unchanged with scale 1 so degenerate
    synthetic inputs stay runnable.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite latent")
    energy = float(np.sum(v * v))
    if energy == 0.0:
        return v.copy(), 1.0
    scale = float(np.sqrt(v.size / energy))
    return v * scale, scale


def pack_real_to_complex(v: np.ndarray) -> ComplexBlock:
    """Interleave an even-length real vector into complex symbols.

    Symbol m is ``v[2m] + 1j*v[2m+1]``; bit-exact and lossless.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-d real vector")
    if v.size % 2 != 0:
        raise ValueError("odd symbol count")
    return ComplexBlock(v[0::2] + 1j * v[1::2])


def unpack_complex_to_real(block: ComplexBlock) -> np.ndarray:
    """Exact inverse of :func:`pack_real_to_complex`."""
    out = np.empty(2 * block.length, dtype=np.float64)
    out[0::2] = block.symbols.real
    out[1::2] = block.symbols.imag
    return out
