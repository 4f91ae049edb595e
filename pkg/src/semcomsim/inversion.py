"""Channel-aware latent inversion by adaptive-moment gradient descent.

Given a target image and a differentiable generator, find the latent whose
noisy, power-normalized version decodes back to the image: minimize

    lambda1 * |G(PN(y) + n) - x|_1  +  lambda2 * D_feat(G(PN(y) + n), x)

over y, where n is channel noise at the variance implied by the SNR the
transmitter assumes (fresh draw each step by default, so the loop tracks an
expectation over the channel).  The returned latent is PN(y*), i.e. already
at unit per-component power, ready for packing.

The gradient flows through the power normalization itself: with
w = y * sqrt(L / sum(y^2)) the Jacobian is a projection, not a pure scaling,

    dL/dy = c * (g - y * <y, g> / sum(y^2)),   c = sqrt(L / sum(y^2)),

which finite-difference tests pin down explicitly.  An L2 data-term variant
is kept alongside the L1 default because it admits a closed-form
least-squares oracle for the linear generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import noise_variance
from .generator import FeatureExtractor, GeneratorModel, backward, feature_distance_and_grad, forward
from .latent import Image, SemanticLatent, power_normalize

NOISE_MODES = ("fresh_per_step", "fixed", "off")
INIT_MODES = ("zeros", "seeded_gaussian")
DATA_TERMS = ("l1", "l2")


class InversionDivergedError(RuntimeError):
    """Loss became non-finite; carries the iteration index."""

    def __init__(self, iteration: int, message: str):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class InversionConfig:
    lambda1: float = 1.0
    lambda2: float = 0.1
    iterations: int = 300
    step_size: float = 0.05
    momentum_decay_1: float = 0.9
    momentum_decay_2: float = 0.999
    epsilon: float = 1e-8
    noise_mode: str = "fresh_per_step"
    init: str = "zeros"
    snr_db: float | None = None  # None: resolved to the channel SNR by the pipeline
    data_term: str = "l1"

    def validate(self) -> list[str]:
        problems = []
        if self.lambda1 < 0 or self.lambda2 < 0:
            problems.append("inversion.lambda1/lambda2 must be >= 0")
        if self.lambda1 + self.lambda2 <= 0:
            problems.append("inversion.lambda1 + inversion.lambda2 must be > 0")
        if self.iterations < 1:
            problems.append("inversion.iterations must be >= 1")
        if self.step_size <= 0:
            problems.append("inversion.step_size must be > 0")
        for name in ("momentum_decay_1", "momentum_decay_2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                problems.append(f"inversion.{name} must be in [0, 1)")
        if self.epsilon <= 0:
            problems.append("inversion.epsilon must be > 0")
        if self.noise_mode not in NOISE_MODES:
            problems.append(f"inversion.noise_mode must be one of {NOISE_MODES}")
        if self.init not in INIT_MODES:
            problems.append(f"inversion.init must be one of {INIT_MODES}")
        if self.data_term not in DATA_TERMS:
            problems.append(f"inversion.data_term must be one of {DATA_TERMS}")
        if self.noise_mode != "off" and self.snr_db is not None and math.isnan(self.snr_db):
            problems.append("inversion.snr_db must not be NaN")
        return problems


@dataclass
class InversionState:
    y: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    loss_trace: list[float] = field(default_factory=list)


@dataclass
class InversionResult:
    latent: SemanticLatent
    loss_trace: list[float]
    state: InversionState


def _pn_vjp(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    energy = float(np.sum(y * y))
    if energy == 0.0:
        return g.copy()  # PN acts as identity (scale 1) at the all-zero point
    c = math.sqrt(y.size / energy)
    return c * (g - y * (float(np.sum(y * g)) / energy))


def loss_and_grad(
    model: GeneratorModel,
    x: Image,
    y: np.ndarray,
    n: np.ndarray,
    cfg: InversionConfig,
    fe: FeatureExtractor | None = None,
) -> tuple[float, np.ndarray]:
    """Objective value and its gradient with respect to y.

    The noise matrix ``n`` is treated as a constant.  The L1 subgradient at
    exactly zero residual is zero, so a perfect reconstruction has zero
    gradient.
    """
    y = np.asarray(y, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if y.shape != n.shape:
        raise ValueError("noise shape does not match latent shape")
    w, _ = power_normalize(y)
    z_noisy = w + n
    img = forward(model, z_noisy)
    residual = img - x.pixels
    if cfg.data_term == "l1":
        loss = cfg.lambda1 * float(np.sum(np.abs(residual)))
        g_img = cfg.lambda1 * np.sign(residual)
    else:
        loss = cfg.lambda1 * float(np.sum(residual * residual))
        g_img = cfg.lambda1 * 2.0 * residual
    if cfg.lambda2 > 0.0:
        if fe is None:
            fe = FeatureExtractor()
        dist, g_feat = feature_distance_and_grad(fe, img, x.pixels)
        loss += cfg.lambda2 * dist
        g_img = g_img + cfg.lambda2 * g_feat
    if not math.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    g_z = backward(model, z_noisy, g_img)
    grad = _pn_vjp(y, g_z)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    return loss, grad


def invert(
    model: GeneratorModel,
    x: Image,
    cfg: InversionConfig,
    rng_seed: int = 0,
    fe: FeatureExtractor | None = None,
) -> InversionResult:
    """Run the optimization and return the normalized latent plus its trace.

    Deterministic: the same (model, image, config, seed) yields a
    bit-identical latent.
    """
    problems = cfg.validate()
    if problems:
        raise ValueError("; ".join(problems))
    if x.height != model.height or x.width != model.width:
        raise ValueError("image dimensions do not match the generator")
    shape = (model.n_slots, model.slot_len)
    rng = np.random.default_rng(rng_seed)

    if cfg.init == "zeros":
        y = np.zeros(shape)
    else:
        y = rng.normal(0.0, 0.1, size=shape)

    if cfg.noise_mode == "off":
        sigma2 = 0.0
    else:
        if cfg.snr_db is None:
            raise ValueError("inversion.snr_db is required unless noise_mode is 'off'")
        sigma2 = noise_variance(cfg.snr_db)
    noise_std = math.sqrt(sigma2 / 2.0)  # per real latent component

    def draw_noise() -> np.ndarray:
        if noise_std == 0.0:
            return np.zeros(shape)
        return rng.normal(0.0, noise_std, size=shape)

    fixed_noise = draw_noise() if cfg.noise_mode == "fixed" else None

    state = InversionState(
        y=y, first_moment=np.zeros(shape), second_moment=np.zeros(shape)
    )
    b1, b2 = cfg.momentum_decay_1, cfg.momentum_decay_2
    for t in range(1, cfg.iterations + 1):
        if cfg.noise_mode == "fresh_per_step":
            n = draw_noise()
        elif cfg.noise_mode == "fixed":
            n = fixed_noise
        else:
            n = np.zeros(shape)
        try:
            loss, grad = loss_and_grad(model, x, state.y, n, cfg, fe)
        except FloatingPointError as exc:
            raise InversionDivergedError(t, f"inversion diverged at iteration {t}: {exc}")
        state.loss_trace.append(loss)
        state.step_count = t
        state.first_moment = b1 * state.first_moment + (1.0 - b1) * grad
        state.second_moment = b2 * state.second_moment + (1.0 - b2) * grad * grad
        m_hat = state.first_moment / (1.0 - b1**t)
        v_hat = state.second_moment / (1.0 - b2**t)
        state.y = state.y - cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        if not np.all(np.isfinite(state.y)):
            raise InversionDivergedError(t, f"inversion diverged at iteration {t}: "
                                            "non-finite iterate")

    w, _ = power_normalize(state.y)
    return InversionResult(latent=SemanticLatent(w), loss_trace=state.loss_trace, state=state)
