"""Rate and quality accounting: index side-channel cost, channel-use totals,
bandwidth compression ratio, PSNR and the feature-space perceptual distance.

Index references travel over a reliable digital side channel: B bits per
index, coded at ``code_rate`` with ``bits_per_symbol``, retransmitted until
success (geometric with probability p), so the *expected* channel uses per
index are B / (code_rate * bits_per_symbol * p).  Expected-cost accounting
is the default; sampling actual retransmission counts is available for
variance studies.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .generator import (
    FeatureExtractor,
    extract_features,
    feature_distance,
    feature_layers,
)
from .latent import Image

PSNR_CAP_DB = 100.0  # sentinel for (near-)zero MSE, keeps CSV finite


@dataclass(frozen=True)
class SideChannelModel:
    code_rate: float = 0.5
    bits_per_symbol: int = 1
    success_prob: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.code_rate <= 1.0:
            raise ValueError("code_rate must be in (0, 1]")
        if self.bits_per_symbol < 1:
            raise ValueError("bits_per_symbol must be a positive integer")
        if not 0.0 < self.success_prob <= 1.0:
            raise ValueError("success_prob must be in (0, 1]")


def _ceil_log2(n: int) -> int:
    if n < 1:
        raise ValueError("need a positive count")
    return (n - 1).bit_length()


def index_bits(n_slots: int, capacity: int) -> int:
    """Bits per index: ceil(log2 N_S) + ceil(log2 N_C)."""
    return _ceil_log2(n_slots) + _ceil_log2(capacity)


def index_cost_symbols(
    n_hits: float, n_slots: int, capacity: int, sc: SideChannelModel
) -> float:
    """Expected channel uses to deliver ``n_hits`` indices.

    ``n_hits`` may be fractional (averages are common in reports).
    """
    if n_hits < 0:
        raise ValueError("n_hits must be >= 0")
    per_index = index_bits(n_slots, capacity) / (
        sc.code_rate * sc.bits_per_symbol * sc.success_prob
    )
    return n_hits * per_index


def sample_index_cost_symbols(
    n_hits: int, n_slots: int, capacity: int, sc: SideChannelModel, rng: np.random.Generator
) -> float:
    """Sampled variant: draw the geometric retransmission count per index."""
    if n_hits < 0:
        raise ValueError("n_hits must be >= 0")
    per_attempt = index_bits(n_slots, capacity) / (sc.code_rate * sc.bits_per_symbol)
    if n_hits == 0:
        return 0.0
    attempts = rng.geometric(sc.success_prob, size=int(n_hits))
    return float(np.sum(attempts)) * per_attempt


def payload_symbols(n_s: int, slot_len: int) -> int:
    """Complex channel uses for the transmitted vectors: n_s * N_L / 2."""
    if slot_len % 2 != 0:
        raise ValueError("odd symbol count")
    return n_s * slot_len // 2


def bcr(k_total: float, height: int, width: int) -> float:
    """Bandwidth compression ratio: channel uses over source dimension."""
    if height < 1 or width < 1:
        raise ValueError("image dimensions must be positive")
    return k_total / (3 * height * width)


def mse_255(x: Image, x_hat: Image) -> float:
    """Mean squared error with pixels scaled to [0, 255]."""
    if x.pixels.shape != x_hat.pixels.shape:
        raise ValueError("image dimensions differ")
    diff = (x.pixels - x_hat.pixels) * 255.0
    return float(np.mean(diff * diff))


def psnr(x: Image, x_hat: Image) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 dB."""
    err = mse_255(x, x_hat)
    if err == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(255.0**2 / err))


def perceptual_distance(fe: FeatureExtractor, x: Image, x_hat: Image) -> float:
    """Feature-space distance over the built-in extractor; 0 iff features match."""
    if x.pixels.shape != x_hat.pixels.shape:
        raise ValueError("image dimensions differ")
    weights = [w for _, _, w in feature_layers(fe)]
    maps_a = extract_features(fe, x)
    maps_b = extract_features(fe, x_hat)
    return feature_distance(maps_a, maps_b, weights)


@dataclass
class TransmissionRecord:
    """Per-image ledger line: what was sent, what it cost, how it looked."""

    image_index: int
    n_s: int
    payload_symbols: int
    index_symbols: float
    k_total: float
    bcr: float
    psnr_db: float
    perceptual_distance: float
    hits: list[tuple[int, int, float]] = field(default_factory=list)

    CSV_HEADER = (
        "image_index,n_s,payload_symbols,index_symbols,k_total,bcr,"
        "psnr_db,perceptual_distance,hits"
    )

    def __post_init__(self):
        if abs(self.k_total - (self.payload_symbols + self.index_symbols)) > 1e-9:
            raise ValueError("k_total != payload_symbols + index_symbols")

    def to_csv_row(self) -> str:
        hits = ";".join(f"{i}:{j}:{sim!r}" for i, j, sim in self.hits)
        return (
            f"{self.image_index},{self.n_s},{self.payload_symbols},"
            f"{self.index_symbols!r},{self.k_total!r},{self.bcr!r},"
            f"{self.psnr_db!r},{self.perceptual_distance!r},{hits}"
        )

    @classmethod
    def from_csv_row(cls, row: str) -> "TransmissionRecord":
        parts = row.rstrip("\n").split(",")
        if len(parts) != 9:
            raise ValueError(f"expected 9 columns, got {len(parts)}")
        hits = []
        if parts[8]:
            for item in parts[8].split(";"):
                i, j, sim = item.split(":")
                hits.append((int(i), int(j), float(sim)))
        return cls(
            image_index=int(parts[0]),
            n_s=int(parts[1]),
            payload_symbols=int(parts[2]),
            index_symbols=float(parts[3]),
            k_total=float(parts[4]),
            bcr=float(parts[5]),
            psnr_db=float(parts[6]),
            perceptual_distance=float(parts[7]),
            hits=hits,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "image_index": self.image_index,
                "n_s": self.n_s,
                "payload_symbols": self.payload_symbols,
                "index_symbols": self.index_symbols,
                "k_total": self.k_total,
                "bcr": self.bcr,
                "psnr_db": self.psnr_db,
                "perceptual_distance": self.perceptual_distance,
                "hits": [[i, j, sim] for i, j, sim in self.hits],
            }
        )
