import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcomsim.latent import (
    ComplexBlock,
    Image,
    SemanticLatent,
    pack_real_to_complex,
    power_normalize,
    unpack_complex_to_real,
)


class TestPowerNormalize:
    def test_three_four_vector(self):
        w, scale = power_normalize(np.array([3.0, 4.0]))
        assert scale == np.sqrt(2 / 25)
        np.testing.assert_array_equal(w, np.array([3.0, 4.0]) * np.sqrt(2 / 25))
        np.testing.assert_allclose(w, [0.8485, 1.1314], atol=5e-5)

    def test_unit_power_vector_unchanged(self):
        v = np.ones(4)
        w, scale = power_normalize(v)
        assert scale == 1.0
        np.testing.assert_array_equal(w, v)

    def test_all_zero_passthrough(self):
        w, scale = power_normalize(np.zeros(8))
        assert scale == 1.0
        np.testing.assert_array_equal(w, np.zeros(8))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite latent"):
            power_normalize(np.array([1.0, np.nan]))
        with pytest.raises(ValueError, match="non-finite latent"):
            power_normalize(np.array([np.inf, 0.0]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            power_normalize(np.zeros(0))

    def test_unit_mean_square_per_real_component(self):
        # normalization target: mean(w^2) == 1 per real dimension, so the
        # packed complex block carries 2 units per symbol (two reals each)
        rng = np.random.default_rng(7)
        for _ in range(20):
            v = rng.normal(0, 3.0, size=2 * rng.integers(1, 64))
            w, _ = power_normalize(v)
            assert abs(np.mean(w * w) - 1.0) < 1e-9
            block = pack_real_to_complex(w)
            assert abs(np.mean(np.abs(block.symbols) ** 2) / 2.0 - 1.0) < 1e-9

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=32),
        st.floats(1e-3, 1e3),
    )
    def test_scale_equivariant_in_direction(self, vals, alpha):
        v = np.asarray(vals)
        if np.sum(v * v) == 0.0:
            return
        w1, _ = power_normalize(v)
        w2, _ = power_normalize(alpha * v)
        np.testing.assert_allclose(w1, w2, rtol=1e-12, atol=1e-12)


class TestPacking:
    def test_interleaved_convention(self):
        block = pack_real_to_complex(np.array([1.0, 2.0, 3.0, 4.0]))
        np.testing.assert_array_equal(block.symbols, [1 + 2j, 3 + 4j])

    def test_zero_pair(self):
        block = pack_real_to_complex(np.array([0.0, 0.0]))
        np.testing.assert_array_equal(block.symbols, [0 + 0j])

    def test_unpack_single(self):
        np.testing.assert_array_equal(
            unpack_complex_to_real(ComplexBlock(np.array([1 + 2j]))), [1.0, 2.0]
        )

    def test_unpack_empty(self):
        out = unpack_complex_to_real(ComplexBlock(np.zeros(0, dtype=complex)))
        assert out.shape == (0,)

    def test_odd_length_rejected(self):
        with pytest.raises(ValueError, match="odd symbol count"):
            pack_real_to_complex(np.array([1.0, 2.0, 3.0]))

    def test_roundtrip_512(self):
        rng = np.random.default_rng(3)
        v = rng.normal(size=512)
        np.testing.assert_array_equal(unpack_complex_to_real(pack_real_to_complex(v)), v)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=0, max_size=64))
    def test_roundtrip_is_bitexact_bijection(self, vals):
        if len(vals) % 2 == 1:
            vals = vals + [0.0]
        v = np.asarray(vals)
        block = pack_real_to_complex(v)
        np.testing.assert_array_equal(unpack_complex_to_real(block), v)
        again = pack_real_to_complex(unpack_complex_to_real(block))
        np.testing.assert_array_equal(again.symbols, block.symbols)


class TestTypes:
    def test_latent_shape_and_rows(self):
        z = SemanticLatent(np.arange(6.0).reshape(2, 3))
        assert (z.n_slots, z.slot_len) == (2, 3)
        np.testing.assert_array_equal(z.row(1), [3.0, 4.0, 5.0])

    def test_latent_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite latent"):
            SemanticLatent(np.array([[np.nan, 0.0]]))

    def test_latent_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            SemanticLatent(np.zeros(4))

    def test_image_bounds(self):
        Image(np.zeros((3, 2, 2)))
        with pytest.raises(ValueError):
            Image(np.full((3, 2, 2), 1.5))
        with pytest.raises(ValueError):
            Image(np.zeros((1, 2, 2)))

    def test_block_length(self):
        assert ComplexBlock(np.array([1j, 2j, 3j])).length == 3
