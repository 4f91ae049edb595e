"""Reconstruction quality versus channel SNR for the desk-scale models.

Runs the latent-only pipeline (caching disabled, so every image pays the
full payload and quality reflects the channel alone) across an SNR grid
and a few seeds, then prints and saves mean PSNR per SNR point.

Usage: python scripts/snr_sweep.py [--out DIR] [--kind linear|mlp]
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from semcomsim.simpipeline import (
    GeneratorSpec,
    SimulationConfig,
    ThresholdSpec,
    run_sequence,
)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="out/snr_sweep")
    parser.add_argument("--kind", choices=("linear", "mlp"), default="mlp")
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--images", type=int, default=40)
    parser.add_argument(
        "--snrs", default="-5,0,5,10,20", help="comma-separated SNR grid in dB"
    )
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snrs = [float(s) for s in args.snrs.split(",")]
    lines = ["snr_db,mean_psnr_db,mean_perceptual_distance"]
    for snr in snrs:
        psnrs, dists = [], []
        for seed in range(args.seeds):
            cfg = SimulationConfig(
                n_slots=4, slot_len=16, cache_capacity=8, height=16, width=16,
                generator=GeneratorSpec(kind=args.kind, hidden=(32,), seed=1),
                thresholds=ThresholdSpec(default="never"),
                snr_db=snr, num_images=args.images, master_seed=seed,
            )
            _, summary = run_sequence(cfg)
            psnrs.append(summary["mean_psnr_db"])
            dists.append(summary["mean_perceptual_distance"])
        print(f"snr {snr:+6.1f} dB: PSNR {np.mean(psnrs):6.2f} dB, "
              f"perceptual {np.mean(dists):.5f}")
        lines.append(f"{snr!r},{float(np.mean(psnrs))!r},{float(np.mean(dists))!r}")
    (out / "psnr_vs_snr.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'psnr_vs_snr.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
