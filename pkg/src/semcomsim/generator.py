"""Differentiable image generators and the fixed multi-scale feature extractor.

Two synthetic generator kinds stand in for a pretrained generative model:

* ``linear``: one affine map from the flattened latent to raw pixels.  Raw
  output is deliberately unclamped so least-squares inversion oracles stay
  exact; clamping to [0, 1] happens only in :func:`generate_image`.
* ``mlp``: tanh hidden layers with a logistic output squash, so images are
  always in range and inversion is genuinely nonconvex.

Gradients are analytic (hand chain rule); tests pin them against central
finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .latent import Image, SemanticLatent

KINDS = ("linear", "mlp")


def _logistic(x: np.ndarray) -> np.ndarray:
    # 0.5*(1+tanh(x/2)) is the logistic function, stable for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class GeneratorModel:
    """A map from an (n_slots, slot_len) latent to a (3, height, width) image."""

    kind: str
    n_slots: int
    slot_len: int
    height: int
    width: int
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)
    hidden: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        dims = [self.n_slots * self.slot_len, *self.hidden, 3 * self.height * self.width]
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count does not match dims")
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[layer + 1], dims[layer]) or b.shape != (dims[layer + 1],):
                raise ValueError(f"layer {layer} has shape {w.shape}, expected "
                                 f"({dims[layer + 1]}, {dims[layer]})")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {layer} has non-finite parameters")
        if self.kind == "linear" and self.hidden:
            raise ValueError("linear generator takes no hidden layers")

    @property
    def latent_dim(self) -> int:
        return self.n_slots * self.slot_len

    @property
    def output_dim(self) -> int:
        return 3 * self.height * self.width

    def _check_latent(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.n_slots, self.slot_len):
            raise ValueError(
                f"latent shape {z.shape} != ({self.n_slots}, {self.slot_len})"
            )
        return z


def _as_matrix(z: SemanticLatent | np.ndarray) -> np.ndarray:
    return z.data if isinstance(z, SemanticLatent) else np.asarray(z, dtype=np.float64)


def forward(model: GeneratorModel, z: SemanticLatent | np.ndarray) -> np.ndarray:
    """Raw generator output of shape (3, H, W), unclamped for the linear kind."""
    h = model._check_latent(_as_matrix(z)).ravel()
    if model.kind == "linear":
        out = model.weights[0] @ h + model.biases[0]
    else:
        for w, b in zip(model.weights[:-1], model.biases[:-1]):
            h = np.tanh(w @ h + b)
        out = _logistic(model.weights[-1] @ h + model.biases[-1])
    return out.reshape(3, model.height, model.width)


def generate_image(model: GeneratorModel, z: SemanticLatent | np.ndarray) -> Image:
    """Forward pass clamped into [0, 1] (image-export semantics)."""
    return Image(np.clip(forward(model, z), 0.0, 1.0))


def backward(
    model: GeneratorModel,
    z: SemanticLatent | np.ndarray,
    upstream: np.ndarray,
) -> np.ndarray:
    """Latent-shaped gradient of ``sum(upstream * forward(z))``."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (3, model.height, model.width):
        raise ValueError(
            f"upstream shape {upstream.shape} != (3, {model.height}, {model.width})"
        )
    zmat = model._check_latent(_as_matrix(z))
    g = upstream.ravel()
    if model.kind == "linear":
        grad = model.weights[0].T @ g
        return grad.reshape(model.n_slots, model.slot_len)
    # recompute activations, then reverse the chain
    acts = [zmat.ravel()]
    h = acts[0]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(w @ h + b)
        acts.append(h)
    out = _logistic(model.weights[-1] @ acts[-1] + model.biases[-1])
    g = g * out * (1.0 - out)
    g = model.weights[-1].T @ g
    for layer in range(len(model.hidden) - 1, -1, -1):
        g = g * (1.0 - acts[layer + 1] ** 2)
        g = model.weights[layer].T @ g
    return g.reshape(model.n_slots, model.slot_len)


def _xavier(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


def make_linear(
    n_slots: int, slot_len: int, height: int, width: int, seed: int = 0
) -> GeneratorModel:
    """Seeded well-conditioned affine generator; bias 0.5 centers pixels."""
    rng = np.random.default_rng(seed)
    out_dim = 3 * height * width
    in_dim = n_slots * slot_len
    return GeneratorModel(
        kind="linear",
        n_slots=n_slots,
        slot_len=slot_len,
        height=height,
        width=width,
        weights=[_xavier(rng, out_dim, in_dim)],
        biases=[np.full(out_dim, 0.5)],
    )


def make_mlp(
    n_slots: int,
    slot_len: int,
    height: int,
    width: int,
    hidden: tuple[int, ...] = (64,),
    seed: int = 0,
) -> GeneratorModel:
    if not hidden:
        raise ValueError("mlp needs at least one hidden layer")
    rng = np.random.default_rng(seed)
    dims = [n_slots * slot_len, *hidden, 3 * height * width]
    weights = [_xavier(rng, dims[k + 1], dims[k]) for k in range(len(dims) - 1)]
    biases = [np.zeros(dims[k + 1]) for k in range(len(dims) - 1)]
    return GeneratorModel(
        kind="mlp",
        n_slots=n_slots,
        slot_len=slot_len,
        height=height,
        width=width,
        weights=weights,
        biases=biases,
        hidden=tuple(hidden),
    )


# ---------------------------------------------------------------------------
# Feature extractor: fixed averaging + first-difference stack at a few scales.
# Stands in for a learned perceptual feature network; deterministic, no
# trainable state, linear in the image (so adjoints below are exact).
# ---------------------------------------------------------------------------

_FILTERS = ("avg", "dh", "dv")


@dataclass(frozen=True)
class FeatureExtractor:
    scales: tuple[int, ...] = (1, 2, 4)
    layer_weights: tuple[float, ...] | None = None  # one per (scale, filter)

    def __post_init__(self):
        if not self.scales or any(s < 1 for s in self.scales):
            raise ValueError("scales must be positive")
        n = len(self.scales) * len(_FILTERS)
        lw = self.layer_weights
        if lw is None:
            lw = tuple([1.0] * n)
        lw = tuple(float(w) for w in lw)
        if len(lw) != n:
            raise ValueError(f"need {n} layer weights, got {len(lw)}")
        if any(w < 0 for w in lw) or not any(w > 0 for w in lw):
            raise ValueError("layer weights must be >= 0 with at least one > 0")
        object.__setattr__(self, "layer_weights", lw)


def _avgpool(x: np.ndarray, s: int) -> np.ndarray:
    if s == 1:
        return x
    c, h, w = x.shape
    hs, ws = h // s, w // s
    x = x[:, : hs * s, : ws * s]
    return x.reshape(c, hs, s, ws, s).mean(axis=(2, 4))


def _avgpool_adjoint(g: np.ndarray, s: int, shape: tuple[int, int, int]) -> np.ndarray:
    if s == 1:
        return g
    c, h, w = shape
    hs, ws = g.shape[1], g.shape[2]
    out = np.zeros(shape)
    spread = np.repeat(np.repeat(g, s, axis=1), s, axis=2) / (s * s)
    out[:, : hs * s, : ws * s] = spread
    return out


def _apply_filter(x: np.ndarray, name: str) -> np.ndarray:
    if name == "avg":
        return x
    if name == "dh":
        return x[:, :, 1:] - x[:, :, :-1]
    if name == "dv":
        return x[:, 1:, :] - x[:, :-1, :]
    raise ValueError(name)


def _filter_adjoint(g: np.ndarray, name: str, shape: tuple[int, int, int]) -> np.ndarray:
    if name == "avg":
        return g
    out = np.zeros(shape)
    if name == "dh":
        out[:, :, 1:] += g
        out[:, :, :-1] -= g
    elif name == "dv":
        out[:, 1:, :] += g
        out[:, :-1, :] -= g
    else:
        raise ValueError(name)
    return out


def feature_layers(fe: FeatureExtractor) -> list[tuple[int, str, float]]:
    """(scale, filter, weight) triples in emission order."""
    out = []
    k = 0
    for s in fe.scales:
        for f in _FILTERS:
            out.append((s, f, fe.layer_weights[k]))
            k += 1
    return out


def extract_features(fe: FeatureExtractor, img: Image | np.ndarray) -> list[np.ndarray]:
    """Deterministic multi-scale feature maps, one per (scale, filter) layer."""
    x = img.pixels if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    maps = []
    for s, f, _ in feature_layers(fe):
        base = _avgpool(x, s)
        maps.append(_apply_filter(base, f))
    return maps


def feature_distance(
    maps_a: list[np.ndarray], maps_b: list[np.ndarray], weights: list[float] | None = None
) -> float:
    """Layer-weighted, spatially normalized squared feature difference.

    Each layer contributes ``sum(|w_l * (a - b)|^2) / (H_l * W_l)``; layers
    whose maps are empty (degenerate image sizes) contribute nothing.
    """
    if len(maps_a) != len(maps_b):
        raise ValueError("feature lists differ in length")
    if weights is None:
        weights = [1.0] * len(maps_a)
    total = 0.0
    for a, b, w in zip(maps_a, maps_b, weights):
        if a.shape != b.shape:
            raise ValueError(f"feature map shapes differ: {a.shape} vs {b.shape}")
        if a.shape[-2] == 0 or a.shape[-1] == 0:
            continue
        d = w * (a - b)
        total += float(np.sum(d * d)) / (a.shape[-2] * a.shape[-1])
    return total


def feature_distance_and_grad(
    fe: FeatureExtractor, img_a: np.ndarray, img_b: np.ndarray
) -> tuple[float, np.ndarray]:
    """Distance between the feature stacks of raw images a and b, plus its
    gradient with respect to ``img_a`` (exact adjoint of the linear stack)."""
    img_a = np.asarray(img_a, dtype=np.float64)
    img_b = np.asarray(img_b, dtype=np.float64)
    if img_a.shape != img_b.shape:
        raise ValueError("image shapes differ")
    total = 0.0
    grad = np.zeros_like(img_a)
    for s, f, w in feature_layers(fe):
        if w == 0.0:
            continue
        base_a = _avgpool(img_a, s)
        base_b = _avgpool(img_b, s)
        fa = _apply_filter(base_a, f)
        fb = _apply_filter(base_b, f)
        if fa.shape[1] == 0 or fa.shape[2] == 0:
            continue
        norm = fa.shape[-2] * fa.shape[-1]
        diff = fa - fb
        total += (w * w) * float(np.sum(diff * diff)) / norm
        g = (2.0 * w * w / norm) * diff
        g = _filter_adjoint(g, f, base_a.shape)
        grad += _avgpool_adjoint(g, s, img_a.shape)
    return total, grad
