"""Pipeline configuration: nested frozen dataclasses, the "toy" and "paper"
presets, a key = value override file format, and the architecture
fingerprint recorded in checkpoints.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import dsp
from .corpus import CorpusConfig
from .errors import ConfigError
from .optim import AdamConfig


@dataclass(frozen=True)
class DspSection:
    sample_rate: int = 16000
    window_len: int = 512
    hop_len: int = 320
    n_bands: int = 18
    n_bfcc: int = 18
    floor_eps: float = 1e-10
    min_period: int = 40
    max_period: int = 240
    synth_noise_seed: int = 1234

    def analyzer(self) -> dsp.AnalyzerConfig:
        return dsp.AnalyzerConfig(
            dsp.FrameSpec(self.window_len, self.hop_len, self.sample_rate),
            n_bands=self.n_bands, n_bfcc=self.n_bfcc, floor_eps=self.floor_eps,
            min_period=self.min_period, max_period=self.max_period,
            synth_noise_seed=self.synth_noise_seed)

    @property
    def acoustic_dim(self) -> int:
        return self.n_bfcc + 2


@dataclass(frozen=True)
class ScheduleSection:
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    decay_steps: int = 2000

    def adam(self, beta1: float, beta2: float, eps: float) -> AdamConfig:
        return AdamConfig(self.lr_start, self.lr_end, self.decay_steps,
                          beta1, beta2, eps)


@dataclass(frozen=True)
class BnSection:
    bn_dim: int = 24
    hidden: int = 64
    context: int = 2  # spliced future/past frames, the TDNN-ish front end
    steps: int = 1500
    batch_size: int = 8
    holdout_fraction: float = 0.1
    target_accuracy: float = 0.9
    early_stop_margin: float = 0.02
    eval_every: int = 100
    schedule: ScheduleSection = field(
        default_factory=lambda: ScheduleSection(1e-3, 1e-4, 1500))


@dataclass(frozen=True)
class ProsodySection:
    emb_dim: int = 48
    enc_conv_layers: int = 2
    enc_conv_width: int = 5
    d_enc: int = 64
    d_dec: int = 128
    prenet: tuple = (64, 64)
    att_dim: int = 48
    att_filters: int = 4
    att_kernel: int = 7
    dropout: float = 0.5
    lambda_stop: float = 0.1
    stop_threshold: float = 0.5
    max_frames: int = 200
    steps: int = 3000
    batch_size: int = 16
    schedule: ScheduleSection = field(
        default_factory=lambda: ScheduleSection(1e-3, 1e-4, 3000))


@dataclass(frozen=True)
class AcousticSection:
    prenet: tuple = (64, 48)
    bank_k: int = 8
    channels: int = 32
    proj: int = 48
    highways: int = 4
    gru: int = 32
    loss: str = "l1"
    steps: int = 2000
    batch_size: int = 32
    schedule: ScheduleSection = field(
        default_factory=lambda: ScheduleSection(1e-3, 2e-4, 2000))
    adapt_steps: int = 400
    adapt_batch_size: int = 8
    adapt_schedule: ScheduleSection = field(
        default_factory=lambda: ScheduleSection(3e-4, 1e-4, 400))

    def __post_init__(self):
        if self.loss not in ("l1", "l2"):
            raise ConfigError(f"acoustic loss must be 'l1' or 'l2', got {self.loss!r}")


@dataclass(frozen=True)
class BaselineSection:
    steps: int = 1500
    batch_size: int = 16
    finetune_steps: int = 400
    schedule: ScheduleSection = field(
        default_factory=lambda: ScheduleSection(1e-3, 1e-4, 1500))
    finetune_schedule: ScheduleSection = field(
        default_factory=lambda: ScheduleSection(3e-4, 1e-4, 400))


@dataclass(frozen=True)
class EvalSection:
    adapt_trials: int = 5
    adapt_utts: int = 10
    sweep_sizes: tuple = (5, 10, 20)
    probe_min_accuracy: float = 0.8
    probe_steps: int = 3000


@dataclass(frozen=True)
class OptimSection:
    # Tacotron2 optimizer constants, shared by every training stage
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6


@dataclass(frozen=True)
class PipelineConfig:
    preset: str = "toy"
    seed: int = 1
    dtype: str = "float64"
    dsp: DspSection = field(default_factory=DspSection)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    optim: OptimSection = field(default_factory=OptimSection)
    bn: BnSection = field(default_factory=BnSection)
    prosody: ProsodySection = field(default_factory=ProsodySection)
    acoustic: AcousticSection = field(default_factory=AcousticSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")


def toy_config(seed: int = 1) -> PipelineConfig:
    """Desk-scale defaults: every stage runs in minutes on one CPU core."""
    return PipelineConfig(seed=seed)


def paper_config(seed: int = 1) -> PipelineConfig:
    """Published-scale dimensions and step budgets (not runnable at desk
    scale; provided for completeness and dimension checks)."""
    lr = ScheduleSection(1e-3, 1e-5, 50_000)
    return PipelineConfig(
        preset="paper", seed=seed, dtype="float32",
        dsp=DspSection(window_len=400, hop_len=160, n_bands=30, n_bfcc=30,
                       min_period=32, max_period=320),
        corpus=CorpusConfig(n_speakers=60, n_utts_per_speaker=250,
                            n_prosody_utts=3000, n_target_utts=220),
        bn=BnSection(bn_dim=512, hidden=512, steps=100_000, batch_size=32,
                     schedule=lr),
        prosody=ProsodySection(emb_dim=512, d_enc=512, d_dec=1024,
                               prenet=(256, 256), att_dim=128, att_filters=8,
                               att_kernel=31, max_frames=1000, steps=200_000,
                               batch_size=16, schedule=lr),
        acoustic=AcousticSection(prenet=(256, 128), bank_k=16, channels=128,
                                 proj=128, highways=4, gru=128, steps=200_000,
                                 batch_size=32, schedule=lr, adapt_steps=4000,
                                 adapt_schedule=ScheduleSection(1e-5, 1e-5, 4000)),
        baseline=BaselineSection(steps=200_000, batch_size=16, finetune_steps=4000,
                                 schedule=lr),
        eval=EvalSection(sweep_sizes=(50, 100, 200), adapt_utts=200),
    )


PRESETS = {"toy": toy_config, "paper": paper_config}


# ---------------------------------------------------------------------------
# serialization: dotted key = value lines


def _iter_items(obj, prefix=""):
    if dataclasses.is_dataclass(obj):
        for f in fields(obj):
            yield from _iter_items(getattr(obj, f.name),
                                   f"{prefix}{f.name}." if prefix or True else f.name)
    else:
        yield prefix.rstrip("."), obj


def config_lines(cfg) -> list[str]:
    lines = []
    for key, value in sorted(_iter_items(cfg)):
        if isinstance(value, tuple):
            rendered = ",".join(str(v) for v in value)
        else:
            rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key} = {rendered}")
    return lines


def save_config(path, cfg: PipelineConfig) -> None:
    Path(path).write_text("\n".join(config_lines(cfg)) + "\n")


def _coerce(text: str, like):
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple):
        parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
        kind = type(like[0]) if like else int
        return tuple(kind(p.strip()) for p in parts)
    return text


def _apply(cfg, dotted: str, text: str):
    head, _, rest = dotted.partition(".")
    try:
        current = getattr(cfg, head)
    except AttributeError:
        raise ConfigError(f"unknown config key {dotted!r}")
    if rest:
        return replace(cfg, **{head: _apply(current, rest, text)})
    return replace(cfg, **{head: _coerce(text, current)})


def apply_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    for key, text in overrides.items():
        cfg = _apply(cfg, key, str(text))
    return cfg


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Read 'dotted.key = value' lines on top of a preset (default: the
    file's own 'preset = ...' line, else toy)."""
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        overrides[key.strip()] = value.strip()
    if base is None:
        preset = overrides.pop("preset", "toy")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        base = PRESETS[preset]()
    return apply_overrides(base, overrides)


# ---------------------------------------------------------------------------
# fingerprints


ARCH_SECTIONS = ("dsp", "bn", "prosody", "acoustic")
_ARCH_SKIP = ("steps", "batch_size", "schedule.", "adapt_", "holdout", "target_accuracy",
              "early_stop", "eval_every", "finetune", "max_frames", "synth_noise_seed")


def fingerprint(cfg: PipelineConfig) -> str:
    """Hash of the architecture-determining fields: dsp geometry and model
    dimensions. Seeds, paths and step budgets do not affect compatibility."""
    lines = []
    for section in ARCH_SECTIONS:
        for key, value in sorted(_iter_items(getattr(cfg, section), section + ".")):
            local = key.split(".", 1)[1]
            if any(local.startswith(skip) or skip in local for skip in _ARCH_SKIP):
                continue
            lines.append(f"{key}={value!r}")
    blob = "\n".join(lines).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def full_config_hash(cfg: PipelineConfig) -> str:
    blob = "\n".join(config_lines(cfg)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]
