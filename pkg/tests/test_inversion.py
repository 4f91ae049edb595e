import warnings

import numpy as np
import pytest

from semcomsim.accounting import psnr
from semcomsim.channel import noise_variance
from semcomsim.generator import (
    FeatureExtractor,
    forward,
    generate_image,
    make_linear,
    make_mlp,
)
from semcomsim.inversion import (
    InversionConfig,
    InversionDivergedError,
    _pn_vjp,
    invert,
    loss_and_grad,
)
from semcomsim.latent import Image, power_normalize


def central_diff(f, y, h=1e-5):
    g = np.zeros_like(y)
    for idx in np.ndindex(y.shape):
        yp = y.copy()
        yp[idx] += h
        ym = y.copy()
        ym[idx] -= h
        g[idx] = (f(yp) - f(ym)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-30)


def shrunk_linear(seed):
    # keeps raw pixels inside [0, 1] for unit-power latents, so the
    # least-squares landscape is exact (no clipping anywhere)
    model = make_linear(4, 8, 4, 4, seed=seed)
    model.weights[0] *= 0.15
    return model


class TestLossAndGrad:
    def test_perfect_reconstruction_zero_loss_zero_grad(self):
        model = make_mlp(2, 4, 4, 4, seed=0)
        rng = np.random.default_rng(1)
        y = rng.normal(size=(2, 4))
        w, _ = power_normalize(y)
        x = Image(forward(model, w))
        cfg = InversionConfig(lambda1=1.0, lambda2=0.1, noise_mode="off")
        loss, grad = loss_and_grad(model, x, y, np.zeros((2, 4)), cfg)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, np.zeros((2, 4)))

    def test_single_pixel_deviation_gives_l1_delta(self):
        model = make_mlp(2, 4, 4, 4, seed=2)
        rng = np.random.default_rng(3)
        y = rng.normal(size=(2, 4))
        w, _ = power_normalize(y)
        pixels = forward(model, w)
        delta = 0.125
        pixels = pixels.copy()
        pixels[0, 0, 0] = np.clip(pixels[0, 0, 0] - delta, 0, 1)
        shift = abs(forward(model, w)[0, 0, 0] - pixels[0, 0, 0])
        cfg = InversionConfig(lambda1=1.0, lambda2=0.0, noise_mode="off")
        loss, _ = loss_and_grad(model, Image(pixels), y, np.zeros((2, 4)), cfg)
        assert loss == pytest.approx(shift, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        fe = FeatureExtractor(scales=(1, 2))
        rng = np.random.default_rng(0)
        cfg = InversionConfig(
            lambda1=1.0, lambda2=0.1, noise_mode="fixed", snr_db=5.0, data_term="l1"
        )
        for probe in range(20):
            if probe % 2 == 0:
                model = make_mlp(2, 4, 4, 4, hidden=(6,), seed=200 + probe)
            else:
                model = make_linear(2, 4, 4, 4, seed=200 + probe)
                model.weights[0] *= 0.15
            z_t = rng.normal(size=(2, 4))
            x = Image(np.clip(forward(model, power_normalize(z_t)[0]), 0, 1))
            y = rng.normal(size=(2, 4)) * 2.0
            n = rng.normal(size=(2, 4)) * 0.3
            _, grad = loss_and_grad(model, x, y, n, cfg, fe)
            numeric = central_diff(lambda yy: loss_and_grad(model, x, yy, n, cfg, fe)[0], y)
            assert rel_err(grad, numeric) < 1e-4

    def test_pn_jacobian_is_a_projection_not_a_scaling(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            y = rng.normal(size=(3, 4))
            u = rng.normal(size=(3, 4))
            analytic = _pn_vjp(y, u)
            numeric = central_diff(lambda yy: float(np.sum(power_normalize(yy)[0] * u)), y)
            assert rel_err(analytic, numeric) < 1e-6
            # a pure scaling would leave the direction of u unchanged
            assert rel_err(analytic, u * (np.linalg.norm(analytic) / np.linalg.norm(u))) > 1e-3

    def test_shape_mismatch_rejected(self):
        model = make_mlp(2, 4, 4, 4, seed=0)
        x = Image(np.full((3, 4, 4), 0.5))
        with pytest.raises(ValueError):
            loss_and_grad(model, x, np.zeros((2, 4)), np.zeros((3, 4)), InversionConfig())


class TestInvert:
    def test_recovers_least_squares_solution(self):
        model = shrunk_linear(11)
        rng = np.random.default_rng(42)
        w_star, _ = power_normalize(rng.normal(size=(4, 8)))
        x = Image(forward(model, w_star))
        assert x.pixels.min() > 0.0 and x.pixels.max() < 1.0  # no clipping occurred

        # independent oracle: dense least squares through the affine map
        w_ls, *_ = np.linalg.lstsq(model.weights[0], x.pixels.ravel() - model.biases[0], rcond=None)
        oracle = power_normalize(w_ls)[0].reshape(4, 8)

        cfg = InversionConfig(
            lambda1=1.0, lambda2=0.0, iterations=1000, step_size=0.05,
            noise_mode="off", init="zeros", data_term="l2",
        )
        result = invert(model, x, cfg, rng_seed=0)
        assert rel_err(result.latent.data, oracle) < 1e-4

    def test_stationary_at_exact_optimum_from_zero_init(self):
        # target G(PN(0)) with zeros init starts at the optimum: the loss can
        # only stay at zero (no strict decrease exists) and z is the zero matrix
        model = make_mlp(2, 4, 4, 4, seed=1)
        x = Image(forward(model, np.zeros((2, 4))))
        cfg = InversionConfig(iterations=50, noise_mode="off", init="zeros")
        result = invert(model, x, cfg, rng_seed=0)
        assert result.loss_trace[0] == 0.0
        assert result.loss_trace[-1] <= result.loss_trace[0]
        np.testing.assert_array_equal(result.latent.data, np.zeros((2, 4)))

    def test_loss_decreases_on_solvable_instance(self):
        model = make_mlp(2, 6, 4, 4, seed=3)
        rng = np.random.default_rng(4)
        w_star, _ = power_normalize(rng.normal(size=(2, 6)))
        x = Image(forward(model, w_star))
        cfg = InversionConfig(iterations=200, step_size=0.02, noise_mode="off", init="zeros")
        result = invert(model, x, cfg, rng_seed=0)
        assert result.loss_trace[-1] < result.loss_trace[0]

    def test_returned_latent_has_unit_power(self):
        model = make_mlp(2, 6, 4, 4, seed=5)
        rng = np.random.default_rng(6)
        x = Image(forward(model, power_normalize(rng.normal(size=(2, 6)))[0]))
        cfg = InversionConfig(iterations=50, noise_mode="fresh_per_step", snr_db=10.0)
        result = invert(model, x, cfg, rng_seed=1)
        assert abs(np.mean(result.latent.data**2) - 1.0) < 1e-9

    def test_seeded_determinism_bit_identical(self):
        model = make_mlp(2, 4, 4, 4, seed=7)
        rng = np.random.default_rng(8)
        x = Image(forward(model, power_normalize(rng.normal(size=(2, 4)))[0]))
        cfg = InversionConfig(iterations=80, noise_mode="fresh_per_step", snr_db=0.0)
        a = invert(model, x, cfg, rng_seed=123)
        b = invert(model, x, cfg, rng_seed=123)
        np.testing.assert_array_equal(a.latent.data, b.latent.data)
        assert a.loss_trace == b.loss_trace
        c = invert(model, x, cfg, rng_seed=124)
        assert not np.array_equal(a.latent.data, c.latent.data)

    def test_divergence_raises_with_iteration_index(self):
        model = make_linear(2, 4, 4, 4, seed=0)
        x = Image(np.ones((3, 4, 4)))
        cfg = InversionConfig(lambda1=1e308, lambda2=0.0, iterations=10,
                              noise_mode="off", data_term="l1")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(InversionDivergedError) as excinfo:
                invert(model, x, cfg, rng_seed=0)
        assert excinfo.value.iteration == 1

    def test_snr_required_unless_noise_off(self):
        model = make_mlp(2, 4, 4, 4, seed=0)
        x = Image(np.full((3, 4, 4), 0.5))
        cfg = InversionConfig(noise_mode="fresh_per_step", snr_db=None, iterations=1)
        with pytest.raises(ValueError):
            invert(model, x, cfg, rng_seed=0)

    def test_config_validation_collects_problems(self):
        bad = InversionConfig(lambda1=-1.0, lambda2=0.0, iterations=0, step_size=-1.0,
                              noise_mode="sometimes", init="ones", data_term="huber")
        problems = bad.validate()
        assert len(problems) >= 6


class TestTrainingSnrMatching:
    def _expected_psnr(self, model, z, x, snr_db, seed, draws=24):
        rng = np.random.default_rng(seed)
        std = np.sqrt(noise_variance(snr_db) / 2)
        vals = []
        for _ in range(draws):
            z_noisy = z + rng.normal(0, std, size=z.shape)
            vals.append(psnr(x, generate_image(model, z_noisy)))
        return float(np.mean(vals))

    def test_matched_training_snr_wins_on_average(self):
        train_snrs = (20.0, -5.0)
        scores = {(c, t): [] for c in train_snrs for t in train_snrs}
        for seed in range(5):
            model = make_mlp(2, 8, 6, 6, hidden=(24,), seed=seed)
            rng = np.random.default_rng(100 + seed)
            x = Image(forward(model, power_normalize(rng.normal(size=(2, 8)))[0]))
            latents = {}
            for train in train_snrs:
                cfg = InversionConfig(
                    lambda1=1.0, lambda2=0.1, iterations=400, step_size=0.05,
                    noise_mode="fresh_per_step", snr_db=train, init="zeros",
                )
                latents[train] = invert(model, x, cfg, rng_seed=seed).latent.data
            for chan in train_snrs:
                for train in train_snrs:
                    scores[(chan, train)].append(
                        self._expected_psnr(model, latents[train], x, chan, seed=777 + seed)
                    )
        for chan in train_snrs:
            matched = np.mean(scores[(chan, chan)])
            other = [t for t in train_snrs if t != chan][0]
            mismatched = np.mean(scores[(chan, other)])
            assert matched > mismatched
