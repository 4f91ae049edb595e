"""Command-line front end: simulate, invert, gen-dataset, report, sweep.

Exit codes: 0 success, 2 configuration error, 3 runtime/protocol error.
Failures emit a machine-readable JSON object on stderr.  No subcommand
mutates its inputs; everything lands under the chosen output directory
(``--out``, else ``$SEMCOMSIM_OUT``, else ``./semcomsim-out``).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__, serialize
from .accounting import TransmissionRecord, psnr
from .generator import generate_image
from .inversion import invert
from .latent import power_normalize
from .semcache import ProtocolDesyncError
from .simpipeline import (
    ConfigError,
    SequenceRunner,
    _STREAM_INVERSION,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    generate_source_sequence,
    build_generator,
    moving_average,
    source_from_dataset,
    subseed,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _emit_error(kind: str, message: str, problems: list[str] | None = None) -> None:
    payload = {"error": {"kind": kind, "message": message}}
    if problems:
        payload["error"]["problems"] = problems
    print(json.dumps(payload), file=sys.stderr)


def _out_dir(args) -> Path:
    root = args.out or os.environ.get("SEMCOMSIM_OUT") or "semcomsim-out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args):
    raw = json.loads(Path(args.config).read_text("utf-8"))
    raw = apply_overrides(raw, args.override or [])
    if args.seed is not None:
        raw["master_seed"] = args.seed
    cfg = config_from_dict(raw)
    return cfg


def _provenance(cfg) -> dict:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return {
        "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "master_seed": cfg.master_seed,
        "artifact_version": __version__,
    }


def _write_records(path: Path, records: list[TransmissionRecord]) -> None:
    lines = [TransmissionRecord.CSV_HEADER]
    lines.extend(r.to_csv_row() for r in records)
    path.write_text("\n".join(lines) + "\n", "utf-8")
    jsonl = path.with_suffix(".jsonl")
    jsonl.write_text("\n".join(r.to_json() for r in records) + "\n", "utf-8")


def _write_summary(path: Path, cfg, summary: dict) -> None:
    payload = {
        "summary": summary,
        "provenance": _provenance(cfg),
        "config": config_to_dict(cfg),
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    records, summary = SequenceRunner(cfg).run()
    _write_records(out / "records.csv", records)
    _write_summary(out / "summary.json", cfg, summary)
    print(f"wrote {out / 'records.csv'} and {out / 'summary.json'}")
    return EXIT_OK


def _cmd_invert(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    model = build_generator(cfg)
    if not 0 <= args.image_index < cfg.num_images:
        raise ConfigError([f"image-index must be in [0, {cfg.num_images})"])
    if cfg.dataset_path is not None:
        source = source_from_dataset(
            serialize.load_dataset(cfg.dataset_path), model, cfg.num_images
        )
    else:
        source = generate_source_sequence(
            cfg.source, model, cfg.num_images, seed=subseed(cfg.master_seed, 0)
        )
    x = source.images[args.image_index]
    inv_cfg = cfg.inversion
    if inv_cfg.snr_db is None and inv_cfg.noise_mode != "off":
        inv_cfg = type(inv_cfg)(**{**inv_cfg.__dict__, "snr_db": cfg.snr_db})
    result = invert(
        model, x, inv_cfg,
        rng_seed=subseed(cfg.master_seed, _STREAM_INVERSION, args.image_index),
    )
    trace_path = out / "loss_trace.csv"
    with trace_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for i, loss in enumerate(result.loss_trace, start=1):
            writer.writerow([i, repr(loss)])
    serialize.save_dataset(
        out / "inverted_latent", result.latent.data[np.newaxis, ...].astype(np.float32)
    )
    recon = generate_image(model, result.latent)
    metrics = {
        "image_index": args.image_index,
        "final_loss": result.loss_trace[-1],
        "initial_loss": result.loss_trace[0],
        "noiseless_psnr_db": psnr(x, recon),
        "provenance": _provenance(cfg),
    }
    (out / "inversion.json").write_text(json.dumps(metrics, indent=2) + "\n", "utf-8")
    print(f"wrote {trace_path}")
    return EXIT_OK


def _cmd_gen_dataset(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    model = build_generator(cfg)
    if cfg.source is None:
        raise ConfigError(["gen-dataset needs a synthetic source section"])
    seq = generate_source_sequence(
        cfg.source, model, cfg.num_images, seed=subseed(cfg.master_seed, 0)
    )
    latents = np.stack([z.data for z in seq.latents]).astype(np.float32)
    images = None
    if args.images:
        images = np.stack([im.pixels for im in seq.images]).astype(np.float32)
    man, binary = serialize.save_dataset(out / args.name, latents, images)
    print(f"wrote {man} and {binary}")
    return EXIT_OK


def _read_records_csv(path: Path) -> list[TransmissionRecord]:
    lines = path.read_text("utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty records file")
    if lines[0] != TransmissionRecord.CSV_HEADER:
        expected = TransmissionRecord.CSV_HEADER.split(",")
        got = lines[0].split(",")
        for col, (e, g) in enumerate(zip(expected, got)):
            if e != g:
                raise ValueError(f"{path}: column {col} is '{g}', expected '{e}'")
        raise ValueError(f"{path}: header has {len(got)} columns, expected {len(expected)}")
    return [TransmissionRecord.from_csv_row(line) for line in lines[1:] if line]


def _cmd_report(args) -> int:
    out = _out_dir(args)
    runs = [_read_records_csv(Path(p)) for p in args.records]
    if runs:
        horizon = max(len(r) for r in runs)
        bcr_mean, psnr_mean = [], []
        for t in range(horizon):
            cell = [run[t] for run in runs if t < len(run)]
            bcr_mean.append(float(np.mean([r.bcr for r in cell])))
            psnr_mean.append(float(np.mean([r.psnr_db for r in cell])))
        ma = moving_average(bcr_mean, args.window)
        lines = ["image_index,bcr_mean,bcr_moving_avg,psnr_mean"]
        for t in range(horizon):
            lines.append(f"{t},{bcr_mean[t]!r},{ma[t]!r},{psnr_mean[t]!r}")
        (out / "bcr_vs_index.csv").write_text("\n".join(lines) + "\n", "utf-8")
        print(f"wrote {out / 'bcr_vs_index.csv'}")
    if args.sweep_index:
        index = json.loads(Path(args.sweep_index).read_text("utf-8"))
        by_snr: dict[float, list[float]] = {}
        for cell in index["cells"]:
            if cell["status"] != "ok":
                continue
            summary = json.loads(
                (Path(args.sweep_index).parent / cell["dir"] / "summary.json").read_text("utf-8")
            )
            snr = float(summary["config"]["channel"]["snr_db"])  # "inf" parses too
            by_snr.setdefault(snr, []).append(summary["summary"]["mean_psnr_db"])
        lines = ["snr_db,mean_psnr_db,n_cells"]
        for snr in sorted(by_snr):
            vals = by_snr[snr]
            lines.append(f"{snr!r},{float(np.mean(vals))!r},{len(vals)}")
        (out / "psnr_vs_snr.csv").write_text("\n".join(lines) + "\n", "utf-8")
        print(f"wrote {out / 'psnr_vs_snr.csv'}")
    return EXIT_OK


def _run_cell(payload: tuple[dict, str]) -> tuple[str, str]:
    raw, cell_dir = payload
    try:
        cfg = config_from_dict(raw)
        records, summary = SequenceRunner(cfg).run()
        out = Path(cell_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_records(out / "records.csv", records)
        _write_summary(out / "summary.json", cfg, summary)
        return ("ok", "")
    except Exception as exc:  # cell isolation: a bad cell must not kill the sweep
        return ("failed", f"{type(exc).__name__}: {exc}")


def _cmd_sweep(args) -> int:
    raw = json.loads(Path(args.config).read_text("utf-8"))
    raw = apply_overrides(raw, args.override or [])
    axes: list[tuple[str, list[str]]] = []
    for axis in args.axis or []:
        if "=" not in axis:
            raise ConfigError([f"axis {axis!r} is not of the form key=v1,v2,..."])
        key, _, values = axis.partition("=")
        axes.append((key, values.split(",")))
    if args.seeds:
        axes.append(("master_seed", args.seeds.split(",")))
    if not axes:
        raise ConfigError(["sweep needs at least one --axis or --seeds"])
    out = _out_dir(args)
    cells = []
    for combo in product(*(vals for _, vals in axes)):
        overrides = [f"{key}={val}" for (key, _), val in zip(axes, combo)]
        name = "__".join(o.replace("/", "-") for o in overrides)
        cell_raw = apply_overrides(raw, overrides)
        config_from_dict(cell_raw)  # validate up front so bad axes fail fast
        cells.append({"name": name, "overrides": overrides, "dir": f"cells/{name}"})
    results = []
    jobs = max(1, args.jobs)
    payloads = [
        (apply_overrides(raw, cell["overrides"]), str(out / cell["dir"])) for cell in cells
    ]
    if jobs == 1:
        results = [_run_cell(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, payloads))
    any_failed = False
    for cell, (status, error) in zip(cells, results):
        cell["status"] = status
        if status != "ok":
            any_failed = True
            cell["error"] = error
    (out / "index.json").write_text(json.dumps({"cells": cells}, indent=2) + "\n", "utf-8")
    print(f"wrote {out / 'index.json'} ({len(cells)} cells)")
    return EXIT_RUNTIME if any_failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semcomsim",
        description="Cache-enabled semantic communication simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config path")
            p.add_argument(
                "--override", action="append", metavar="KEY=VALUE",
                help="dotted config override, repeatable",
            )
            p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("simulate", help="run one sequence, write records + summary")
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("invert", help="invert a single source image, export the loss trace")
    add_common(p)
    p.add_argument("--image-index", type=int, default=0)
    p.set_defaults(func=_cmd_invert)

    p = sub.add_parser("gen-dataset", help="synthesize a latent/image dataset file pair")
    add_common(p)
    p.add_argument("--name", default="dataset", help="basename for the file pair")
    p.add_argument("--images", action="store_true", help="append decoded images")
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("report", help="aggregate record CSVs into plot-ready tables")
    p.add_argument("records", nargs="*", help="records.csv paths (e.g. one per seed)")
    p.add_argument("--window", type=int, default=10, help="moving-average window")
    p.add_argument("--sweep-index", default=None, help="sweep index.json for PSNR-vs-SNR")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("sweep", help="cartesian sweep over config axes")
    add_common(p)
    p.add_argument(
        "--axis", action="append", metavar="KEY=V1,V2",
        help="axis values (dotted config key), repeatable",
    )
    p.add_argument("--seeds", default=None, help="comma-separated master seeds")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker count")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit_error("config", "invalid configuration", exc.problems)
        return EXIT_CONFIG
    except (json.JSONDecodeError, FileNotFoundError, serialize.ManifestError, ValueError) as exc:
        _emit_error("config", str(exc))
        return EXIT_CONFIG
    except ProtocolDesyncError as exc:
        _emit_error("protocol", str(exc))
        return EXIT_RUNTIME
    except RuntimeError as exc:
        _emit_error("runtime", str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
