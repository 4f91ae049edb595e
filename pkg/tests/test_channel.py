import math

import numpy as np
import pytest

from semcomsim.channel import ChannelConfig, noise_variance, transmit
from semcomsim.latent import ComplexBlock


def _noise(n_symbols, snr_db, seed=0, stream=0):
    block = ComplexBlock(np.zeros(n_symbols, dtype=complex))
    out = transmit(block, ChannelConfig(snr_db=snr_db, seed=seed), stream_index=stream)
    return out.symbols


class TestNoiseVariance:
    def test_zero_db(self):
        assert noise_variance(0.0) == 1.0

    def test_ten_db(self):
        assert noise_variance(10.0) == pytest.approx(0.1, rel=1e-12)

    def test_five_db(self):
        assert noise_variance(5.0) == pytest.approx(0.31623, abs=5e-6)

    def test_infinite_snr_sentinel(self):
        assert noise_variance(math.inf) == 0.0


class TestTransmit:
    def test_infinite_snr_identity_bitexact(self):
        rng = np.random.default_rng(1)
        block = ComplexBlock(rng.normal(size=32) + 1j * rng.normal(size=32))
        out = transmit(block, ChannelConfig(snr_db=math.inf, seed=9))
        np.testing.assert_array_equal(out.symbols, block.symbols)

    def test_empirical_variance_at_0db(self):
        noise = _noise(100_000, 0.0)
        var = np.mean(np.abs(noise) ** 2)
        assert 0.98 <= var <= 1.02

    def test_noise_mean_near_zero(self):
        noise = _noise(100_000, 0.0)
        assert abs(np.mean(noise)) < 0.02

    def test_lag1_autocorrelation_small(self):
        noise = _noise(100_000, 0.0)
        rho = np.sum(noise[:-1] * np.conj(noise[1:])) / np.sum(np.abs(noise) ** 2)
        assert abs(rho) < 0.02

    def test_halved_variance_per_component(self):
        noise = _noise(100_000, 3.0)
        sigma2 = noise_variance(3.0)
        assert np.var(noise.real) == pytest.approx(sigma2 / 2, rel=0.03)
        assert np.var(noise.imag) == pytest.approx(sigma2 / 2, rel=0.03)

    def test_seeded_determinism(self):
        a = _noise(64, 0.0, seed=5, stream=3)
        b = _noise(64, 0.0, seed=5, stream=3)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent_of_execution_order(self):
        # stream k's realization does not depend on which streams ran before
        first = _noise(16, 0.0, seed=5, stream=11)
        _noise(1000, 0.0, seed=5, stream=2)
        again = _noise(16, 0.0, seed=5, stream=11)
        np.testing.assert_array_equal(first, again)

    def test_different_seed_or_stream_changes_noise(self):
        base = _noise(64, 0.0, seed=5, stream=0)
        assert not np.array_equal(base, _noise(64, 0.0, seed=6, stream=0))
        assert not np.array_equal(base, _noise(64, 0.0, seed=5, stream=1))

    def test_signal_preserved_under_noise(self):
        rng = np.random.default_rng(2)
        sig = rng.normal(size=2000) + 1j * rng.normal(size=2000)
        out = transmit(ComplexBlock(sig), ChannelConfig(snr_db=0.0, seed=4))
        delta = out.symbols - sig
        assert np.mean(np.abs(delta) ** 2) == pytest.approx(1.0, abs=0.1)


def test_nan_snr_rejected():
    with pytest.raises(ValueError):
        ChannelConfig(snr_db=math.nan)
