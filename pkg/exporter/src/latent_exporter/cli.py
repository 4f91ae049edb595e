"""Command-line entry point mirroring the ExportJob fields."""
from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export
from .models import ModelContractError, build_vgg_perceptual


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latent-exporter",
        description="Invert real images through a pretrained generator and "
        "write the latents in the simulator dataset format",
    )
    parser.add_argument("--model", required=True, help="generator checkpoint path")
    parser.add_argument("--images", required=True, help="input image directory")
    parser.add_argument("--out", required=True, help="output dataset basename")
    parser.add_argument("--snr-db", type=float, default=5.0)
    parser.add_argument("--lambda1", type=float, default=1.0)
    parser.add_argument("--lambda2", type=float, default=0.0,
                        help="> 0 enables the pretrained perceptual term")
    parser.add_argument("--iterations", type=int, default=300)
    parser.add_argument("--step-size", type=float, default=0.05)
    parser.add_argument("--limit", type=int, default=None, help="max image count")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--init", choices=("zeros", "gaussian"), default="zeros")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        model_path=args.model,
        image_dir=args.images,
        output_base=args.out,
        snr_db=args.snr_db,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        iterations=args.iterations,
        step_size=args.step_size,
        limit=args.limit,
        seed=args.seed,
        device=args.device,
        init=args.init,
    )
    try:
        perceptual = build_vgg_perceptual(args.device) if args.lambda2 > 0 else None
        result = export(job, perceptual)
    except (ModelContractError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.manifest_path} and {result.binary_path} "
          f"({result.n_slots} x {result.slot_len} latents)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
