"""Channel-aware inversion of real images into exportable latent sequences.

Per image the exporter minimizes

    lambda1 * |G(PN(y) + n) - x|_1 + lambda2 * perceptual(G(PN(y) + n), x)

over the latent y with Adam, drawing fresh channel noise n each step at the
variance implied by the job's SNR (matching the simulator's mapping of
CN(0, sigma^2) per complex symbol to sigma^2/2 per real latent component).
Latents are stored post-normalization, at unit mean square per component,
exactly as the simulator's canonical latents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage

from .dataset_format import write_dataset
from .models import load_generator, model_dims

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class ExportJob:
    model_path: str
    image_dir: str
    output_base: str
    snr_db: float = 5.0
    lambda1: float = 1.0
    lambda2: float = 0.0  # perceptual module is optional; 0 keeps it off
    iterations: int = 300
    step_size: float = 0.05
    limit: int | None = None
    seed: int = 0
    device: str = "cpu"
    init: str = "zeros"  # zeros | gaussian


@dataclass
class ExportResult:
    manifest_path: Path
    binary_path: Path
    n_slots: int
    slot_len: int
    losses: list[list[float]] = field(default_factory=list)


def power_normalize_t(y: torch.Tensor) -> torch.Tensor:
    energy = torch.sum(y * y)
    if energy == 0:
        return y
    return y * torch.sqrt(y.numel() / energy)


def list_images(image_dir: str | Path, limit: int | None) -> list[Path]:
    paths = sorted(
        p for p in Path(image_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise FileNotFoundError(f"no images found under {image_dir}")
    return paths[:limit] if limit is not None else paths


def load_image(path: Path, height: int, width: int, device: str) -> torch.Tensor:
    img = PILImage.open(path).convert("RGB").resize((width, height), PILImage.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0).to(device)


def invert_image(
    model: torch.nn.Module,
    x: torch.Tensor,
    job: ExportJob,
    generator: torch.Generator,
    perceptual: torch.nn.Module | None = None,
) -> tuple[torch.Tensor, list[float]]:
    n_slots, slot_len, _, _ = model_dims(model)
    noise_var = 0.0 if math.isinf(job.snr_db) else 10.0 ** (-job.snr_db / 10.0)
    noise_std = math.sqrt(noise_var / 2.0)
    if job.init == "zeros":
        y = torch.zeros(1, n_slots, slot_len, device=job.device, requires_grad=True)
    else:
        y0 = torch.randn(1, n_slots, slot_len, generator=generator, device=job.device) * 0.1
        y = y0.requires_grad_(True)
    opt = torch.optim.Adam([y], lr=job.step_size)
    losses = []
    for _ in range(job.iterations):
        opt.zero_grad()
        w = power_normalize_t(y)
        if noise_std > 0:
            n = torch.randn(w.shape, generator=generator, device=job.device) * noise_std
            w = w + n
        x_hat = model(w)
        loss = job.lambda1 * torch.sum(torch.abs(x_hat - x))
        if job.lambda2 > 0:
            if perceptual is None:
                raise ValueError("lambda2 > 0 requires a perceptual module")
            loss = loss + job.lambda2 * perceptual(x_hat, x)
        if not torch.isfinite(loss):
            raise FloatingPointError("inversion loss became non-finite")
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
    with torch.no_grad():
        final = power_normalize_t(y.detach())
    return final.squeeze(0), losses


def export(job: ExportJob, perceptual: torch.nn.Module | None = None) -> ExportResult:
    """Run the job and write the dataset pair; deterministic under the seed."""
    model = load_generator(job.model_path, device=job.device)
    n_slots, slot_len, height, width = model_dims(model)
    paths = list_images(job.image_dir, job.limit)
    generator = torch.Generator(device=job.device)
    latents = np.zeros((len(paths), n_slots, slot_len), dtype=np.float32)
    all_losses = []
    for idx, path in enumerate(paths):
        generator.manual_seed(job.seed + idx)  # per-image stream, order-independent
        x = load_image(path, height, width, job.device)
        if job.iterations > 0:
            z, losses = invert_image(model, x, job, generator, perceptual)
        else:
            z = torch.zeros(n_slots, slot_len)
            losses = []
        latents[idx] = z.cpu().numpy().astype(np.float32)
        all_losses.append(losses)
        if losses:
            print(f"[{idx + 1}/{len(paths)}] {path.name}: loss {losses[0]:.4g} -> {losses[-1]:.4g}")
    man, binary = write_dataset(job.output_base, latents)
    return ExportResult(
        manifest_path=man,
        binary_path=binary,
        n_slots=n_slots,
        slot_len=slot_len,
        losses=all_losses,
    )
