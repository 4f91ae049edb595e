"""AWGN channel for complex symbol blocks.

Noise realizations come from a counter-based Philox stream keyed by
``(seed, stream_index)``, so independent transmissions are reproducible
regardless of the order they execute in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .latent import ComplexBlock

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db):
            raise ValueError("snr_db must not be NaN")


def noise_variance(snr_db: float) -> float:
    """Per-complex-symbol noise variance for a unit-power signal.

    ``snr_db = inf`` is the noiseless sentinel and maps to variance 0.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return float(10.0 ** (-snr_db / 10.0))


def _noise_rng(seed: int, stream_index: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, stream_index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def transmit(block: ComplexBlock, cfg: ChannelConfig, stream_index: int = 0) -> ComplexBlock:
    """Add complex Gaussian noise; real and imaginary parts are each
    N(0, sigma^2 / 2).

    At infinite SNR the input block is returned unchanged (bit-exact).
    """
    sigma2 = noise_variance(cfg.snr_db)
    if sigma2 == 0.0:
        return block
    rng = _noise_rng(cfg.seed, stream_index)
    parts = rng.normal(0.0, np.sqrt(sigma2 / 2.0), size=(block.length, 2))
    return ComplexBlock(block.symbols + parts[:, 0] + 1j * parts[:, 1])
