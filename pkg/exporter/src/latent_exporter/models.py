"""Generator loading and the perceptual-loss stack.

A generator checkpoint is either a TorchScript archive or a pickled
``nn.Module``.  The loaded module must satisfy the exporter contract:

* integer attributes ``n_slots``, ``slot_len``, ``image_height``,
  ``image_width`` (latent and output dimensions; for the usual pretrained
  face model these are 28, 512, 512, 512);
* ``forward(latent)`` maps ``[B, n_slots, slot_len]`` to an image batch
  ``[B, 3, image_height, image_width]`` with values in [0, 1].

Checkpoints of third-party generators are wrapped into this contract once,
offline, then exported like any other model.
"""
from __future__ import annotations

from pathlib import Path

import torch

_REQUIRED_ATTRS = ("n_slots", "slot_len", "image_height", "image_width")


class ModelContractError(RuntimeError):
    """The checkpoint does not satisfy the exporter's generator contract."""


def load_generator(path: str | Path, device: str = "cpu") -> torch.nn.Module:
    path = Path(path)
    if not path.exists():
        raise ModelContractError(f"model checkpoint not found: {path}")
    try:
        model = torch.jit.load(str(path), map_location=device)
    except RuntimeError:
        try:
            model = torch.load(str(path), map_location=device, weights_only=False)
        except Exception as exc:
            raise ModelContractError(f"cannot load model {path}: {exc}")
    if not isinstance(model, torch.nn.Module):
        raise ModelContractError(f"{path} did not contain an nn.Module")
    for attr in _REQUIRED_ATTRS:
        if not hasattr(model, attr):
            raise ModelContractError(
                f"model lacks required attribute {attr!r}; wrap the checkpoint "
                "to expose latent and image dimensions"
            )
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def model_dims(model: torch.nn.Module) -> tuple[int, int, int, int]:
    return (
        int(model.n_slots),
        int(model.slot_len),
        int(model.image_height),
        int(model.image_width),
    )


def build_vgg_perceptual(device: str = "cpu") -> torch.nn.Module:
    """Pretrained-VGG feature distance (the usual perceptual metric).

    Needs torchvision and its pretrained weights; weight download is an
    external dependency, so tests inject their own feature module instead.
    """
    try:
        from torchvision.models import VGG16_Weights, vgg16
    except ImportError as exc:
        raise ModelContractError(
            "torchvision is required for the pretrained perceptual loss"
        ) from exc
    features = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features.to(device).eval()
    for p in features.parameters():
        p.requires_grad_(False)
    cut_points = (4, 9, 16, 23)  # relu1_2, relu2_2, relu3_3, relu4_3

    class VggDistance(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.features = features
            mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
            std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
            self.register_buffer("mean", mean.to(device))
            self.register_buffer("std", std.to(device))

        def _stack(self, x):
            x = (x - self.mean) / self.std
            out = []
            for i, layer in enumerate(self.features):
                x = layer(x)
                if i in cut_points:
                    out.append(x)
                if i >= max(cut_points):
                    break
            return out

        def forward(self, a, b):
            dist = a.new_zeros(())
            for fa, fb in zip(self._stack(a), self._stack(b)):
                dist = dist + torch.mean((fa - fb) ** 2)
            return dist

    return VggDistance()
