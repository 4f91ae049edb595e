"""End-to-end sequence simulation over an image stream.

One run is a strictly sequential, stateful loop: per image the transmitter
obtains a latent (ground truth in ``latent_only`` mode, gradient-descent
inversion in ``full_inversion`` mode), plans cache substitutions, power
normalizes and packs the surviving vectors, sends them over the AWGN
channel, and the receiver rebuilds the latent from received vectors plus
its own cache before decoding with the same generator.

Randomness is fanned out from one master seed into independent substreams
(source synthesis, channel noise, per-image inversion, index-retransmission
sampling) via ``numpy`` SeedSequence spawn keys, so changing one stage's
randomness never perturbs the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import accounting, semcache, serialize
from .accounting import SideChannelModel, TransmissionRecord
from .channel import ChannelConfig, transmit
from .generator import (
    FeatureExtractor,
    GeneratorModel,
    generate_image,
    make_linear,
    make_mlp,
)
from .inversion import InversionConfig, invert
from .latent import (
    ComplexBlock,
    Image,
    SemanticLatent,
    pack_real_to_complex,
    power_normalize,
    unpack_complex_to_real,
)
from .semcache import (
    CacheMemory,
    ThresholdProfile,
    plan_transmission,
    rx_reconstruct,
    tx_update,
)

MODES = ("latent_only", "full_inversion")

# dataset file I/O is shared plumbing; re-exported here because sequence
# sources are its main consumer
load_dataset = serialize.load_dataset
save_dataset = serialize.save_dataset

# SeedSequence spawn-key ids, the documented splitting rule
_STREAM_SOURCE = 0
_STREAM_CHANNEL = 1
_STREAM_INVERSION = 2
_STREAM_INDEX_SAMPLING = 3


def subseed(master_seed: int, stream: int, *extra: int) -> int:
    """Derive an independent 64-bit substream seed from the master seed."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream, *extra))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every violated field."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class GeneratorSpec:
    kind: str = "linear"
    hidden: tuple[int, ...] = (64,)
    seed: int = 0
    weights_path: str | None = None


@dataclass
class ThresholdSpec:
    """Raw threshold description; materialized once n_slots is known."""

    default: float | str = 0.9
    overrides: dict[int, float | str] = field(default_factory=dict)
    values: list[float | str] | None = None

    @staticmethod
    def _resolve(v: float | str) -> float:
        if isinstance(v, str):
            if v == "never":
                return semcache.NEVER
            raise ConfigError([f"thresholds: unknown sentinel {v!r}"])
        return float(v)

    def materialize(self, n_slots: int) -> ThresholdProfile:
        if self.values is not None:
            if len(self.values) != n_slots:
                raise ConfigError(
                    [f"thresholds.values: expected {n_slots} entries, got {len(self.values)}"]
                )
            return ThresholdProfile(tuple(self._resolve(v) for v in self.values))
        gamma = [self._resolve(self.default)] * n_slots
        for i, v in self.overrides.items():
            if not 0 <= int(i) < n_slots:
                raise ConfigError([f"thresholds.overrides: slot {i} out of range"])
            gamma[int(i)] = self._resolve(v)
        return ThresholdProfile(tuple(gamma))


@dataclass
class SyntheticSourceSpec:
    """Clustered synthetic source.

    Each slot owns a fixed population of ``prototypes_per_slot`` prototype
    vectors drawn at setup.  Per image and slot, with probability
    ``reuse_prob`` one stored prototype is picked uniformly, else a fresh
    one-off vector is drawn; Gaussian perturbation is always added.  Early
    picks land on prototypes the cache has not seen yet, so the hit rate
    ramps up as the sequence progresses."""

    prototypes_per_slot: int = 3
    reuse_prob: float = 0.7
    perturbation_std: float = 0.01

    def validate(self) -> list[str]:
        problems = []
        if self.prototypes_per_slot < 1:
            problems.append("source.synthetic.prototypes_per_slot must be >= 1")
        if not 0.0 <= self.reuse_prob <= 1.0:
            problems.append("source.synthetic.reuse_prob must be in [0, 1]")
        if self.perturbation_std < 0.0:
            problems.append("source.synthetic.perturbation_std must be >= 0")
        return problems


@dataclass
class SimulationConfig:
    n_slots: int = 8
    slot_len: int = 32
    cache_capacity: int = 16
    height: int = 32
    width: int = 32
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    thresholds: ThresholdSpec = field(default_factory=ThresholdSpec)
    snr_db: float = 5.0
    channel_seed: int | None = None  # None: derived from master_seed
    side_channel: SideChannelModel = field(default_factory=SideChannelModel)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    num_images: int = 100
    source: SyntheticSourceSpec | None = field(default_factory=SyntheticSourceSpec)
    dataset_path: str | None = None
    master_seed: int = 0
    mode: str = "latent_only"
    sampled_index_cost: bool = False

    def validate(self) -> list[str]:
        problems = []
        if self.n_slots < 1:
            problems.append("n_slots must be >= 1")
        if self.slot_len < 1:
            problems.append("slot_len must be >= 1")
        elif self.slot_len % 2 != 0:
            problems.append("slot_len must be even (two reals per complex symbol)")
        if self.cache_capacity < 1:
            problems.append("cache_capacity must be >= 1")
        if self.height < 1 or self.width < 1:
            problems.append("image.height and image.width must be >= 1")
        if self.generator.kind not in ("linear", "mlp"):
            problems.append("generator.kind must be 'linear' or 'mlp'")
        if self.generator.kind == "mlp" and not self.generator.hidden:
            problems.append("generator.hidden must be nonempty for kind 'mlp'")
        if math.isnan(self.snr_db):
            problems.append("channel.snr_db must not be NaN")
        if self.num_images < 1:
            problems.append("num_images must be >= 1")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}")
        if (self.source is None) == (self.dataset_path is None):
            problems.append("exactly one of source.synthetic and source.dataset is required")
        if self.source is not None:
            problems.extend(self.source.validate())
        problems.extend(self.inversion.validate())
        try:
            self.thresholds.materialize(max(self.n_slots, 1))
        except (ConfigError, ValueError) as exc:
            problems.append(f"thresholds: {exc}")
        try:
            SideChannelModel(
                self.side_channel.code_rate,
                self.side_channel.bits_per_symbol,
                self.side_channel.success_prob,
            )
        except ValueError as exc:
            problems.append(f"side_channel: {exc}")
        return problems


def build_generator(cfg: SimulationConfig) -> GeneratorModel:
    spec = cfg.generator
    if spec.weights_path is not None:
        model = serialize.load_generator(spec.weights_path)
        mismatches = []
        if (model.n_slots, model.slot_len) != (cfg.n_slots, cfg.slot_len):
            mismatches.append("generator weights dims do not match n_slots/slot_len")
        if (model.height, model.width) != (cfg.height, cfg.width):
            mismatches.append("generator weights dims do not match image.height/width")
        if mismatches:
            raise ConfigError(mismatches)
        return model
    if spec.kind == "linear":
        return make_linear(cfg.n_slots, cfg.slot_len, cfg.height, cfg.width, seed=spec.seed)
    return make_mlp(
        cfg.n_slots, cfg.slot_len, cfg.height, cfg.width,
        hidden=tuple(spec.hidden), seed=spec.seed,
    )


@dataclass
class SourceSequence:
    latents: list[SemanticLatent]
    images: list[Image]
    reused: np.ndarray  # (num_images, n_slots) bool; pool-draw bookkeeping


def generate_source_sequence(
    spec: SyntheticSourceSpec,
    model: GeneratorModel,
    num_images: int,
    seed: int,
) -> SourceSequence:
    """Draw ground-truth latents and their decoded images.

    ``reused[t, i]`` records picks of a prototype that some earlier image
    already emitted for that slot (the events a synchronized cache can
    exploit); a prototype's first appearance counts as fresh.
    """
    rng = np.random.default_rng(seed)
    populations = [
        rng.normal(size=(spec.prototypes_per_slot, model.slot_len))
        for _ in range(model.n_slots)
    ]
    emitted: list[set[int]] = [set() for _ in range(model.n_slots)]
    latents, images = [], []
    reused = np.zeros((num_images, model.n_slots), dtype=bool)
    for t in range(num_images):
        rows = np.zeros((model.n_slots, model.slot_len))
        for i in range(model.n_slots):
            if rng.random() < spec.reuse_prob:
                j = int(rng.integers(spec.prototypes_per_slot))
                proto = populations[i][j]
                reused[t, i] = j in emitted[i]
                emitted[i].add(j)
            else:
                proto = rng.normal(size=model.slot_len)
            rows[i] = proto
            if spec.perturbation_std > 0.0:
                rows[i] = rows[i] + rng.normal(0.0, spec.perturbation_std, size=model.slot_len)
        z_star = SemanticLatent(rows)
        latents.append(z_star)
        images.append(generate_image(model, power_normalize(rows)[0]))
    return SourceSequence(latents=latents, images=images, reused=reused)


def source_from_dataset(
    dataset: serialize.Dataset, model: GeneratorModel, num_images: int
) -> SourceSequence:
    count = dataset.latents.shape[0]
    problems = []
    if dataset.latents.shape[1:] != (model.n_slots, model.slot_len):
        problems.append(
            f"dataset latents have shape {dataset.latents.shape[1:]}, config expects "
            f"({model.n_slots}, {model.slot_len})"
        )
    if num_images > count:
        problems.append(f"num_images {num_images} exceeds dataset count {count}")
    if dataset.images is not None and dataset.images.shape[2:] != (model.height, model.width):
        problems.append(
            f"dataset images have shape {dataset.images.shape[2:]}, config expects "
            f"({model.height}, {model.width})"
        )
    if problems:
        raise ConfigError(problems)
    latents, images = [], []
    for t in range(num_images):
        z_star = SemanticLatent(dataset.latents[t].astype(np.float64))
        latents.append(z_star)
        if dataset.images is not None:
            images.append(Image(np.clip(dataset.images[t].astype(np.float64), 0.0, 1.0)))
        else:
            images.append(generate_image(model, power_normalize(z_star.data)[0]))
    return SourceSequence(
        latents=latents, images=images, reused=np.zeros((num_images, model.n_slots), dtype=bool)
    )


class SequenceRunner:
    """Owns the evolving state of one run; ``step()`` transmits one image.

    ``index_corruption_hook`` is a test hook: it receives the hit list the
    receiver would see and returns a (possibly corrupted) replacement, for
    exercising the protocol-desync path.
    """

    def __init__(self, cfg: SimulationConfig, fe: FeatureExtractor | None = None):
        problems = cfg.validate()
        if problems:
            raise ConfigError(problems)
        self.cfg = cfg
        self.model = build_generator(cfg)
        self.fe = fe if fe is not None else FeatureExtractor()
        self.thresholds = cfg.thresholds.materialize(cfg.n_slots)
        self.tx_cache = CacheMemory(cfg.n_slots, cfg.cache_capacity, cfg.slot_len)
        self.rx_cache = CacheMemory(cfg.n_slots, cfg.cache_capacity, cfg.slot_len)
        chan_seed = (
            cfg.channel_seed
            if cfg.channel_seed is not None
            else subseed(cfg.master_seed, _STREAM_CHANNEL)
        )
        self.channel_cfg = ChannelConfig(snr_db=cfg.snr_db, seed=chan_seed)
        self._index_rng = np.random.default_rng(
            subseed(cfg.master_seed, _STREAM_INDEX_SAMPLING)
        )
        if cfg.dataset_path is not None:
            dataset = serialize.load_dataset(cfg.dataset_path)
            self.source = source_from_dataset(dataset, self.model, cfg.num_images)
        else:
            self.source = generate_source_sequence(
                cfg.source, self.model, cfg.num_images,
                seed=subseed(cfg.master_seed, _STREAM_SOURCE),
            )
        self.records: list[TransmissionRecord] = []
        self.index_corruption_hook: Callable[[list], list] | None = None
        self.last_source_image: Image | None = None
        self.last_reconstruction: Image | None = None
        self._t = 0

    @property
    def images_done(self) -> int:
        return self._t

    def _inversion_cfg(self) -> InversionConfig:
        inv = self.cfg.inversion
        if inv.snr_db is None and inv.noise_mode != "off":
            # transmitter knows the channel noise power
            return InversionConfig(**{**inv.__dict__, "snr_db": self.cfg.snr_db})
        return inv

    def step(self) -> TransmissionRecord:
        if self._t >= self.cfg.num_images:
            raise RuntimeError("sequence exhausted")
        t = self._t
        cfg = self.cfg
        z_star = self.source.latents[t]
        x = self.source.images[t]

        if cfg.mode == "latent_only":
            z = SemanticLatent(power_normalize(z_star.data)[0])
        else:
            result = invert(
                self.model, x, self._inversion_cfg(),
                rng_seed=subseed(cfg.master_seed, _STREAM_INVERSION, t),
                fe=self.fe,
            )
            z = result.latent

        plan = plan_transmission(z, self.tx_cache, self.thresholds)

        if plan.n_s > 0:
            # one power normalization over the whole transmitted block
            w, _ = power_normalize(plan.kept_matrix().ravel())
            tx_rows = w.reshape(plan.n_s, cfg.slot_len)
            block = pack_real_to_complex(w)
        else:
            tx_rows = np.zeros((0, cfg.slot_len))
            block = ComplexBlock(np.zeros(0, dtype=np.complex128))
        # the transmitter caches exactly what it put on the air, so at
        # infinite SNR both caches hold bit-identical vectors
        tx_update(self.tx_cache, plan.with_kept_vectors(tx_rows))

        rx_block = transmit(block, self.channel_cfg, stream_index=t)
        rx_rows = (
            unpack_complex_to_real(rx_block).reshape(plan.n_s, cfg.slot_len)
            if plan.n_s > 0
            else np.zeros((0, cfg.slot_len))
        )

        hits_for_rx = list(plan.hits)
        if self.index_corruption_hook is not None:
            hits_for_rx = self.index_corruption_hook(hits_for_rx)
        z_hat = rx_reconstruct(rx_rows, hits_for_rx, self.rx_cache)
        x_hat = generate_image(self.model, z_hat)
        self.last_source_image = x
        self.last_reconstruction = x_hat

        n_hits = len(plan.hits)
        if cfg.sampled_index_cost:
            index_symbols = accounting.sample_index_cost_symbols(
                n_hits, cfg.n_slots, cfg.cache_capacity, cfg.side_channel, self._index_rng
            )
        else:
            index_symbols = accounting.index_cost_symbols(
                n_hits, cfg.n_slots, cfg.cache_capacity, cfg.side_channel
            )
        payload = accounting.payload_symbols(plan.n_s, cfg.slot_len)
        k_total = payload + index_symbols
        record = TransmissionRecord(
            image_index=t,
            n_s=plan.n_s,
            payload_symbols=payload,
            index_symbols=index_symbols,
            k_total=k_total,
            bcr=accounting.bcr(k_total, cfg.height, cfg.width),
            psnr_db=accounting.psnr(x, x_hat),
            perceptual_distance=accounting.perceptual_distance(self.fe, x, x_hat),
            hits=list(plan.hits),
        )
        self.records.append(record)
        self._t += 1
        return record

    def run(self) -> tuple[list[TransmissionRecord], dict]:
        while self._t < self.cfg.num_images:
            self.step()
        return self.records, summarize(self.records)


def moving_average(series: list[float], window: int) -> list[float]:
    """Trailing moving average: element t averages the last ``window`` values."""
    if window < 1:
        raise ValueError("window must be >= 1")
    out = []
    for t in range(len(series)):
        lo = max(0, t - window + 1)
        out.append(float(np.mean(series[lo : t + 1])))
    return out


def summarize(records: list[TransmissionRecord], window: int = 10) -> dict:
    bcr_series = [r.bcr for r in records]
    return {
        "num_images": len(records),
        "mean_bcr": float(np.mean(bcr_series)),
        "min_bcr": float(np.min(bcr_series)),
        "mean_psnr_db": float(np.mean([r.psnr_db for r in records])),
        "mean_perceptual_distance": float(
            np.mean([r.perceptual_distance for r in records])
        ),
        "mean_n_s": float(np.mean([r.n_s for r in records])),
        "mean_hits": float(np.mean([len(r.hits) for r in records])),
        "bcr_series": bcr_series,
        "bcr_moving_avg": moving_average(bcr_series, window),
        "moving_avg_window": window,
    }


def run_sequence(cfg: SimulationConfig) -> tuple[list[TransmissionRecord], dict]:
    """Convenience wrapper: build a runner, run it to completion."""
    return SequenceRunner(cfg).run()


def full_scale_config(**overrides) -> SimulationConfig:
    """Accounting-scale profile (28 slots of 512 at 512x512 images).

    Intended for latent-free rate arithmetic and file-format work; a full
    inversion at this scale is deliberately out of desk range.
    """
    cfg = SimulationConfig(
        n_slots=28,
        slot_len=512,
        cache_capacity=50,
        height=512,
        width=512,
        thresholds=ThresholdSpec(default=0.8, overrides={i: 0.95 for i in range(6, 14)}),
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


# ---------------------------------------------------------------------------
# Config file format: a JSON document mirroring SimulationConfig field names.
# Unknown keys are rejected; every violation is reported, not just the first.
# "inf"/"-inf" strings are accepted where JSON lacks the literal, and "never"
# is the per-slot threshold sentinel.
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "n_slots", "slot_len", "cache_capacity", "image", "generator", "thresholds",
    "channel", "side_channel", "inversion", "num_images", "source",
    "master_seed", "mode", "sampled_index_cost",
}
_SECTION_KEYS = {
    "image": {"height", "width"},
    "generator": {"kind", "hidden", "seed", "weights"},
    "thresholds": {"default", "overrides", "values"},
    "channel": {"snr_db", "seed"},
    "side_channel": {"code_rate", "bits_per_symbol", "success_prob"},
    "inversion": {
        "lambda1", "lambda2", "iterations", "step_size", "momentum_decay_1",
        "momentum_decay_2", "epsilon", "noise_mode", "init", "snr_db", "data_term",
    },
    "source": {"synthetic", "dataset"},
    "source.synthetic": {"prototypes_per_slot", "reuse_prob", "perturbation_std"},
}


def _coerce_float(value, path: str, problems: list[str], allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool):
        problems.append(f"{path}: expected a number, got a bool")
        return 0.0
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)  # accepts "inf", "-inf", "1e-3"
        except ValueError:
            pass
    problems.append(f"{path}: expected a number, got {value!r}")
    return 0.0


def _coerce_int(value, path: str, problems: list[str], allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
        problems.append(f"{path}: expected an integer, got {value!r}")
        return 0
    return value


def _check_keys(d: dict, section: str, problems: list[str]) -> None:
    allowed = _SECTION_KEYS[section] if section else _TOP_KEYS
    for key in d:
        if key not in allowed:
            prefix = f"{section}." if section else ""
            problems.append(f"unknown config key '{prefix}{key}'")


def config_from_dict(raw: dict) -> SimulationConfig:
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])
    problems: list[str] = []
    _check_keys(raw, "", problems)

    def section(name: str) -> dict:
        v = raw.get(name, {})
        if not isinstance(v, dict):
            problems.append(f"{name}: expected an object")
            return {}
        _check_keys(v, name, problems)
        return v

    cfg = SimulationConfig()
    if "n_slots" in raw:
        cfg.n_slots = _coerce_int(raw["n_slots"], "n_slots", problems)
    if "slot_len" in raw:
        cfg.slot_len = _coerce_int(raw["slot_len"], "slot_len", problems)
    if "cache_capacity" in raw:
        cfg.cache_capacity = _coerce_int(raw["cache_capacity"], "cache_capacity", problems)
    img = section("image")
    if "height" in img:
        cfg.height = _coerce_int(img["height"], "image.height", problems)
    if "width" in img:
        cfg.width = _coerce_int(img["width"], "image.width", problems)

    gen = section("generator")
    cfg.generator = GeneratorSpec(
        kind=str(gen.get("kind", "linear")),
        hidden=tuple(
            _coerce_int(h, "generator.hidden", problems) for h in gen.get("hidden", (64,))
        ),
        seed=_coerce_int(gen.get("seed", 0), "generator.seed", problems),
        weights_path=gen.get("weights"),
    )

    thr = section("thresholds")
    overrides = {}
    for key, val in (thr.get("overrides") or {}).items():
        try:
            overrides[int(key)] = val
        except (TypeError, ValueError):
            problems.append(f"thresholds.overrides: bad slot index {key!r}")
    cfg.thresholds = ThresholdSpec(
        default=thr.get("default", 0.9),
        overrides=overrides,
        values=thr.get("values"),
    )

    chan = section("channel")
    if "snr_db" in chan:
        cfg.snr_db = _coerce_float(chan["snr_db"], "channel.snr_db", problems)
    cfg.channel_seed = _coerce_int(
        chan.get("seed"), "channel.seed", problems, allow_none=True
    )

    sc = section("side_channel")
    try:
        cfg.side_channel = SideChannelModel(
            code_rate=_coerce_float(sc.get("code_rate", 0.5), "side_channel.code_rate", problems),
            bits_per_symbol=_coerce_int(
                sc.get("bits_per_symbol", 1), "side_channel.bits_per_symbol", problems
            ),
            success_prob=_coerce_float(
                sc.get("success_prob", 0.9), "side_channel.success_prob", problems
            ),
        )
    except ValueError as exc:
        problems.append(f"side_channel: {exc}")

    inv = section("inversion")
    cfg.inversion = InversionConfig(
        lambda1=_coerce_float(inv.get("lambda1", 1.0), "inversion.lambda1", problems),
        lambda2=_coerce_float(inv.get("lambda2", 0.1), "inversion.lambda2", problems),
        iterations=_coerce_int(inv.get("iterations", 300), "inversion.iterations", problems),
        step_size=_coerce_float(inv.get("step_size", 0.05), "inversion.step_size", problems),
        momentum_decay_1=_coerce_float(
            inv.get("momentum_decay_1", 0.9), "inversion.momentum_decay_1", problems
        ),
        momentum_decay_2=_coerce_float(
            inv.get("momentum_decay_2", 0.999), "inversion.momentum_decay_2", problems
        ),
        epsilon=_coerce_float(inv.get("epsilon", 1e-8), "inversion.epsilon", problems),
        noise_mode=str(inv.get("noise_mode", "fresh_per_step")),
        init=str(inv.get("init", "zeros")),
        snr_db=_coerce_float(inv.get("snr_db"), "inversion.snr_db", problems, allow_none=True),
        data_term=str(inv.get("data_term", "l1")),
    )

    if "num_images" in raw:
        cfg.num_images = _coerce_int(raw["num_images"], "num_images", problems)
    if "master_seed" in raw:
        cfg.master_seed = _coerce_int(raw["master_seed"], "master_seed", problems)
    if "mode" in raw:
        cfg.mode = str(raw["mode"])
    if "sampled_index_cost" in raw:
        if not isinstance(raw["sampled_index_cost"], bool):
            problems.append("sampled_index_cost: expected a bool")
        else:
            cfg.sampled_index_cost = raw["sampled_index_cost"]

    src = section("source")
    synth = src.get("synthetic")
    cfg.dataset_path = src.get("dataset")
    if synth is not None:
        if not isinstance(synth, dict):
            problems.append("source.synthetic: expected an object")
            synth = {}
        _check_keys(synth, "source.synthetic", problems)
        cfg.source = SyntheticSourceSpec(
            prototypes_per_slot=_coerce_int(
                synth.get("prototypes_per_slot", 3),
                "source.synthetic.prototypes_per_slot", problems,
            ),
            reuse_prob=_coerce_float(
                synth.get("reuse_prob", 0.7), "source.synthetic.reuse_prob", problems
            ),
            perturbation_std=_coerce_float(
                synth.get("perturbation_std", 0.01),
                "source.synthetic.perturbation_std", problems,
            ),
        )
    elif cfg.dataset_path is not None:
        cfg.source = None

    problems.extend(cfg.validate())
    if problems:
        raise ConfigError(sorted(set(problems)))
    return cfg


def _json_safe_float(v: float | None):
    if v is None:
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def config_to_dict(cfg: SimulationConfig) -> dict:
    thr = cfg.thresholds
    source: dict = {}
    if cfg.source is not None:
        source["synthetic"] = {
            "prototypes_per_slot": cfg.source.prototypes_per_slot,
            "reuse_prob": cfg.source.reuse_prob,
            "perturbation_std": cfg.source.perturbation_std,
        }
    if cfg.dataset_path is not None:
        source["dataset"] = cfg.dataset_path
    return {
        "n_slots": cfg.n_slots,
        "slot_len": cfg.slot_len,
        "cache_capacity": cfg.cache_capacity,
        "image": {"height": cfg.height, "width": cfg.width},
        "generator": {
            "kind": cfg.generator.kind,
            "hidden": list(cfg.generator.hidden),
            "seed": cfg.generator.seed,
            "weights": cfg.generator.weights_path,
        },
        "thresholds": {
            "default": _json_safe_float(thr.default) if isinstance(thr.default, float) else thr.default,
            "overrides": {str(k): v for k, v in thr.overrides.items()},
            "values": thr.values,
        },
        "channel": {"snr_db": _json_safe_float(cfg.snr_db), "seed": cfg.channel_seed},
        "side_channel": {
            "code_rate": cfg.side_channel.code_rate,
            "bits_per_symbol": cfg.side_channel.bits_per_symbol,
            "success_prob": cfg.side_channel.success_prob,
        },
        "inversion": {
            "lambda1": cfg.inversion.lambda1,
            "lambda2": cfg.inversion.lambda2,
            "iterations": cfg.inversion.iterations,
            "step_size": cfg.inversion.step_size,
            "momentum_decay_1": cfg.inversion.momentum_decay_1,
            "momentum_decay_2": cfg.inversion.momentum_decay_2,
            "epsilon": cfg.inversion.epsilon,
            "noise_mode": cfg.inversion.noise_mode,
            "init": cfg.inversion.init,
            "snr_db": _json_safe_float(cfg.inversion.snr_db),
            "data_term": cfg.inversion.data_term,
        },
        "num_images": cfg.num_images,
        "source": source,
        "master_seed": cfg.master_seed,
        "mode": cfg.mode,
        "sampled_index_cost": cfg.sampled_index_cost,
    }


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply dotted ``key=value`` overrides onto a raw config dict.

    Values parse as JSON when possible, else stay strings ("inf" and
    "never" are meaningful strings).  Unknown paths are rejected.
    """
    import copy
    import json as _json

    out = copy.deepcopy(raw)
    problems = []
    for item in overrides:
        if "=" not in item:
            problems.append(f"override {item!r} is not of the form key=value")
            continue
        key, _, text = item.partition("=")
        try:
            value = _json.loads(text)
        except _json.JSONDecodeError:
            value = text
        parts = key.split(".")
        top = parts[0]
        if top not in _TOP_KEYS:
            problems.append(f"unknown config key '{top}'")
            continue
        if len(parts) == 1:
            out[top] = value
            continue
        node = out.setdefault(top, {})
        if not isinstance(node, dict):
            problems.append(f"override {key!r}: '{top}' is not a section")
            continue
        ok = True
        for depth in range(1, len(parts) - 1):
            section = ".".join(parts[: depth + 1])
            if section not in _SECTION_KEYS and section != "thresholds.overrides":
                problems.append(f"unknown config key '{section}'")
                ok = False
                break
            node = node.setdefault(parts[depth], {})
            if not isinstance(node, dict):
                problems.append(f"override {key!r}: '{section}' is not a section")
                ok = False
                break
        if not ok:
            continue
        leaf_section = ".".join(parts[:-1])
        if leaf_section in _SECTION_KEYS and parts[-1] not in _SECTION_KEYS[leaf_section]:
            problems.append(f"unknown config key '{key}'")
            continue
        node[parts[-1]] = value
    if problems:
        raise ConfigError(problems)
    return out
