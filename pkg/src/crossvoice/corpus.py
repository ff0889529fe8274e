"""Synthetic-speech corpus: a deterministic formant-style generator with
exact frame alignments, a toy lexicon/g2p, and manifest/batch utilities.

Every utterance is reproducible from (seed, speaker index, utterance index);
speaker identity lives in f0, spectral tilt and formant shift while phone
identity dominates the band-energy pattern, so both are recoverable from
BFCC features.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .errors import ConfigError, DataError, InputError

# ---------------------------------------------------------------------------
# phone inventory

_VOWELS = [
    # name, F1, F2 (Hz)
    ("aa", 780.0, 1250.0),
    ("eh", 530.0, 1850.0),
    ("iy", 300.0, 2550.0),
    ("ao", 520.0, 950.0),
    ("uw", 320.0, 700.0),
    ("er", 490.0, 1350.0),
    ("ae", 660.0, 1750.0),
    ("ih", 390.0, 2150.0),
]

_NOISES = [
    # name, center, bandwidth (Hz)
    ("ss", 5200.0, 1400.0),
    ("sh", 3200.0, 1100.0),
    ("ff", 6500.0, 1300.0),
    ("hh", 1800.0, 900.0),
]

BOUNDARY = "#"


@dataclass(frozen=True)
class Phone:
    name: str
    phone_id: int
    voiced: bool
    freq_a: float  # F1 for vowels, noise band center otherwise
    freq_b: float  # F2 for vowels, noise bandwidth otherwise
    dur_ms: tuple[float, float]


def phone_inventory() -> list[Phone]:
    """12 content phones; the boundary symbol is appended by build_lexicon."""
    phones = [Phone(n, i, True, f1, f2, (90.0, 170.0))
              for i, (n, f1, f2) in enumerate(_VOWELS)]
    base = len(phones)
    phones += [Phone(n, base + i, False, c, w, (70.0, 130.0))
               for i, (n, c, w) in enumerate(_NOISES)]
    return phones


@dataclass(frozen=True)
class Lexicon:
    """Toy grapheme-to-phoneme map over the synthetic phone inventory."""

    words: dict
    inventory: tuple  # phone names; index == phone id
    boundary_id: int

    def __post_init__(self):
        n = len(self.inventory)
        for word, ids in self.words.items():
            for pid in ids:
                if not 0 <= pid < n:
                    raise ConfigError(f"lexicon word {word!r} maps outside the inventory")


def build_lexicon() -> Lexicon:
    """Syllable words: every fricative+vowel pair plus the bare vowels."""
    phones = phone_inventory()
    inventory = tuple(p.name for p in phones) + (BOUNDARY,)
    by_name = {p.name: p.phone_id for p in phones}
    words = {v: (by_name[v],) for v, _, _ in _VOWELS}
    for noise, _, _ in _NOISES:
        for vowel, _, _ in _VOWELS:
            words[noise + vowel] = (by_name[noise], by_name[vowel])
    return Lexicon(words, inventory, boundary_id=len(inventory) - 1)


def g2p(text: str, lexicon: Lexicon, boundary: bool = False) -> list[int]:
    """Whitespace-tokenized lookup; unknown tokens are input errors."""
    ids: list[int] = []
    for token in text.split():
        if token not in lexicon.words:
            raise InputError(f"unknown token {token!r} (not in the lexicon)")
        if boundary and ids:
            ids.append(lexicon.boundary_id)
        ids.extend(lexicon.words[token])
    return ids


# ---------------------------------------------------------------------------
# speakers


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    f0_base: float  # Hz
    f0_range: float  # Hz, contour depth
    spectral_tilt: float  # dB/octave, <= 0 darkens
    formant_shift: float  # multiplicative

    def __post_init__(self):
        if self.f0_base <= 0:
            raise ConfigError(f"f0_base must be positive, got {self.f0_base}")
        if not 0.7 <= self.formant_shift <= 1.3:
            raise ConfigError(f"formant_shift outside [0.7, 1.3]: {self.formant_shift}")


def pretrain_speakers(n_speakers: int, seed: int) -> list[SpeakerProfile]:
    """Evenly spread f0 with independently shuffled tilt/shift grids. Shifts
    stay within +-10% so phone classes do not smear across speakers, and
    contours stay shallow so utterance-level f0 still identifies the
    speaker against the ~9 Hz grid spacing."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    f0s = np.linspace(130.0, 300.0, n_speakers) + rng.uniform(-2.0, 2.0, n_speakers)
    tilts = np.linspace(-9.0, 0.0, n_speakers)
    shifts = np.linspace(0.92, 1.10, n_speakers)
    rng.shuffle(tilts)
    rng.shuffle(shifts)
    return [SpeakerProfile(f"spk{idx:02d}", float(f0s[idx]),
                           float(rng.uniform(1.5, 3.5)), float(tilts[idx]),
                           float(shifts[idx]))
            for idx in range(n_speakers)]


def prosody_speaker(seed: int) -> SpeakerProfile:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 202]))
    return SpeakerProfile("spk_prosody", float(rng.uniform(180.0, 205.0)),
                          float(rng.uniform(1.5, 3.5)), float(rng.uniform(-5.0, -3.0)),
                          float(rng.uniform(0.97, 1.03)))


def target_speaker(seed: int) -> SpeakerProfile:
    """An unseen speaker deliberately off the pretraining grids so a feature
    probe can tell it apart."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 303]))
    low_voice = rng.random() < 0.5
    f0 = rng.uniform(108.0, 122.0) if low_voice else rng.uniform(310.0, 330.0)
    tilt = float(rng.uniform(-12.0, -10.5))
    shift = float(rng.uniform(0.86, 0.89) if rng.random() < 0.5
                  else rng.uniform(1.13, 1.16))
    return SpeakerProfile("spk_target", float(f0), float(rng.uniform(1.5, 3.5)),
                          tilt, shift)


# ---------------------------------------------------------------------------
# rendering


@dataclass
class RenderedUtterance:
    samples: np.ndarray
    phone_ids: list[int]
    phone_spans: list[tuple[int, int]]  # sample ranges per phone
    f0_track: np.ndarray  # per-sample Hz, 0 where unvoiced


def _tilt_gain(freqs: np.ndarray, tilt_db_per_oct: float) -> np.ndarray:
    # flat below 100 Hz so negative tilts cannot blow up the DC region
    octaves = np.log2(np.maximum(freqs, 100.0) / 200.0)
    return 10.0 ** (tilt_db_per_oct * octaves / 20.0)


def _render_vowel(phone: Phone, profile: SpeakerProfile, f0: np.ndarray,
                  sample_rate: int) -> np.ndarray:
    n = len(f0)
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
    f1 = phone.freq_a * profile.formant_shift
    f2 = phone.freq_b * profile.formant_shift
    f0_mean = float(f0.mean())
    n_harm = max(int(0.45 * sample_rate / f0_mean), 3)
    k = np.arange(1, n_harm + 1)
    freqs = k * f0_mean
    amps = (0.05 + 8.0 * np.exp(-0.5 * ((freqs - f1) / 110.0) ** 2)
            + 5.0 * np.exp(-0.5 * ((freqs - f2) / 140.0) ** 2))
    amps = amps * _tilt_gain(freqs, profile.spectral_tilt) / k ** 0.5
    wave = (amps[:, None] * np.sin(k[:, None] * phase[None, :])).sum(axis=0)
    return wave / (np.abs(wave).max() + 1e-9)


def _render_noise(phone: Phone, profile: SpeakerProfile, n: int,
                  sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(n)
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    center = phone.freq_a * profile.formant_shift
    mask = (0.01 + np.exp(-0.5 * ((freqs - center) / phone.freq_b) ** 2)) * (freqs > 300.0)
    shaped = np.fft.irfft(spectrum * mask * _tilt_gain(freqs, profile.spectral_tilt), n=n)
    return 0.6 * shaped / (np.abs(shaped).max() + 1e-9)


def render_utterance(phone_ids: list[int], profile: SpeakerProfile,
                     sample_rate: int, rng: np.random.Generator) -> RenderedUtterance:
    phones = phone_inventory()
    durations = []
    for pid in phone_ids:
        lo, hi = phones[pid].dur_ms
        durations.append(int(rng.uniform(lo, hi) * sample_rate / 1000.0))
    total = sum(durations)
    samples = np.zeros(total)
    f0_track = np.zeros(total)
    # one slow, shallow contour over the whole utterance
    t = np.arange(total) / total
    contour = (profile.f0_base
               + profile.f0_range * np.sin(2.0 * np.pi * (0.7 * t + rng.uniform(0.0, 1.0)))
               - 0.015 * profile.f0_base * t)
    spans = []
    pos = 0
    ramp = int(0.008 * sample_rate)
    for pid, dur in zip(phone_ids, durations):
        phone = phones[pid]
        seg_f0 = contour[pos:pos + dur]
        if phone.voiced:
            seg = _render_vowel(phone, profile, seg_f0, sample_rate)
            f0_track[pos:pos + dur] = seg_f0
        else:
            seg = _render_noise(phone, profile, dur, sample_rate, rng)
        if ramp and dur > 2 * ramp:
            fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
            seg[:ramp] *= fade
            seg[-ramp:] *= fade[::-1]
        samples[pos:pos + dur] = seg
        spans.append((pos, pos + dur))
        pos += dur
    samples *= 0.5 / (np.abs(samples).max() + 1e-9)
    return RenderedUtterance(samples, list(phone_ids), spans, f0_track)


def frame_labels(rendered: RenderedUtterance, spec: dsp.FrameSpec) -> np.ndarray:
    """Phone id per analysis frame, decided by the frame's center sample;
    always matches the analyze() frame count."""
    n = spec.n_frames(len(rendered.samples))
    labels = np.zeros(n, dtype=np.int64)
    starts = np.array([s for s, _ in rendered.phone_spans])
    for i in range(n):
        center = i * spec.hop_len + spec.window_len // 2
        labels[i] = rendered.phone_ids[
            int(np.searchsorted(starts, center, side="right") - 1)]
    return labels


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    speaker_id: str
    phoneme_ids: tuple
    audio_path: Path
    label_path: Path | None = None


def save_manifest(path, records: list[UtteranceRecord]) -> None:
    path = Path(path)
    base = path.parent
    lines = []
    for r in records:
        label = r.label_path.relative_to(base).as_posix() if r.label_path else "-"
        lines.append("\t".join([
            r.utt_id, r.speaker_id, " ".join(str(i) for i in r.phoneme_ids),
            r.audio_path.relative_to(base).as_posix(), label,
        ]))
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def load_manifest(path) -> list[UtteranceRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 tab-separated fields, "
                            f"got {len(fields)}")
        utt_id, speaker_id, ids_text, audio_rel, label_rel = fields
        try:
            ids = tuple(int(t) for t in ids_text.split())
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed phoneme ids {ids_text!r}")
        audio_path = base / audio_rel
        if not audio_path.exists():
            raise DataError(f"{path}:{lineno}: missing audio file {audio_path}")
        label_path = None
        if label_rel != "-":
            label_path = base / label_rel
            if not label_path.exists():
                raise DataError(f"{path}:{lineno}: missing label file {label_path}")
        records.append(UtteranceRecord(utt_id, speaker_id, ids, audio_path, label_path))
    return records


def iterate_batches(records: list, batch_size: int, seed: int, n_epochs=None):
    """Seeded epoch shuffles; the final short batch is kept. Batches are
    sorted by utt_id internally so downstream reductions are order-canonical."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    epoch = 0
    while n_epochs is None or epoch < n_epochs:
        rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
        order = rng.permutation(len(records))
        for start in range(0, len(records), batch_size):
            chunk = [records[i] for i in order[start:start + batch_size]]
            yield sorted(chunk, key=lambda r: r.utt_id)
        epoch += 1


# ---------------------------------------------------------------------------
# corpus generation


@dataclass(frozen=True)
class CorpusConfig:
    n_speakers: int = 20
    n_utts_per_speaker: int = 30
    n_prosody_utts: int = 200
    n_target_utts: int = 14
    min_phones: int = 4
    max_phones: int = 8

    def __post_init__(self):
        if self.n_speakers < 1 or self.n_utts_per_speaker < 1:
            raise ConfigError("corpus needs at least one speaker and one utterance")
        if not 1 <= self.min_phones <= self.max_phones:
            raise ConfigError("bad phone-count range")


def _random_phone_string(rng: np.random.Generator, cfg: CorpusConfig) -> list[int]:
    n = int(rng.integers(cfg.min_phones, cfg.max_phones + 1))
    n_content = len(phone_inventory())
    # force at least one voiced phone so every utterance carries pitch
    ids = list(rng.integers(0, n_content, size=n))
    if not any(pid < len(_VOWELS) for pid in ids):
        ids[int(rng.integers(0, n))] = int(rng.integers(0, len(_VOWELS)))
    return [int(i) for i in ids]


def _write_utterance(out_dir: Path, utt_id: str, speaker: SpeakerProfile,
                     phone_ids: list[int], spec: dsp.FrameSpec,
                     rng: np.random.Generator) -> UtteranceRecord:
    rendered = render_utterance(phone_ids, speaker, spec.sample_rate, rng)
    wav_path = out_dir / "wav" / f"{utt_id}.wav"
    label_path = out_dir / "labels" / f"{utt_id}.bncf"
    dsp.wav_write(wav_path, dsp.AudioBuffer(rendered.samples, spec.sample_rate))
    dsp.bncf_write(label_path, frame_labels(rendered, spec)[:, None])
    return UtteranceRecord(utt_id, speaker.speaker_id, tuple(phone_ids),
                           wav_path, label_path)


def _utt_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def generate_corpus(out_dir, corpus_cfg: CorpusConfig, spec: dsp.FrameSpec,
                    seed: int) -> dict:
    """Write the three corpus subsets and return their manifest paths.

    Subsets: 'pretrain' (multi-speaker, with frame labels), 'prosody'
    (single dedicated speaker), 'target' (one unseen speaker for adaptation).
    Byte-identical for identical (config, spec, seed).
    """
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)

    manifests = {}
    speakers = pretrain_speakers(corpus_cfg.n_speakers, seed)
    records = []
    for si, speaker in enumerate(speakers):
        for ui in range(corpus_cfg.n_utts_per_speaker):
            rng = _utt_rng(seed, 1, si, ui)
            phone_ids = _random_phone_string(rng, corpus_cfg)
            records.append(_write_utterance(
                out_dir, f"{speaker.speaker_id}_u{ui:03d}", speaker, phone_ids,
                spec, rng))
    manifests["pretrain"] = out_dir / "manifest_pretrain.tsv"
    save_manifest(manifests["pretrain"], records)

    speaker = prosody_speaker(seed)
    records = []
    for ui in range(corpus_cfg.n_prosody_utts):
        rng = _utt_rng(seed, 2, ui)
        phone_ids = _random_phone_string(rng, corpus_cfg)
        records.append(_write_utterance(
            out_dir, f"prosody_u{ui:03d}", speaker, phone_ids, spec, rng))
    manifests["prosody"] = out_dir / "manifest_prosody.tsv"
    save_manifest(manifests["prosody"], records)

    manifests["target"] = generate_target_set(out_dir, corpus_cfg, spec, seed)

    profiles = speakers + [speaker, target_speaker(seed)]
    lines = ["\t".join([p.speaker_id, repr(p.f0_base), repr(p.f0_range),
                        repr(p.spectral_tilt), repr(p.formant_shift)])
             for p in profiles]
    (out_dir / "speakers.tsv").write_text("\n".join(lines) + "\n")
    return manifests


def generate_target_set(out_dir, corpus_cfg: CorpusConfig, spec: dsp.FrameSpec,
                        seed: int, trial: int = 0) -> Path:
    """Target-speaker utterances only; trial > 0 draws a fresh unseen speaker
    so adaptation can be repeated across seeded trials."""
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    speaker = target_speaker(seed + 7919 * trial)
    suffix = "" if trial == 0 else f"_trial{trial}"
    records = []
    for ui in range(corpus_cfg.n_target_utts):
        rng = _utt_rng(seed, 3, trial, ui)
        phone_ids = _random_phone_string(rng, corpus_cfg)
        records.append(_write_utterance(
            out_dir, f"target{suffix}_u{ui:03d}", speaker, phone_ids, spec, rng))
    manifest = out_dir / f"manifest_target{suffix}.tsv"
    save_manifest(manifest, records)
    return manifest


# ---------------------------------------------------------------------------
# separability diagnostic


def nearest_centroid_frame_accuracy(train_feats: np.ndarray, train_labels: np.ndarray,
                                    test_feats: np.ndarray, test_labels: np.ndarray) -> float:
    """Frame accuracy of a nearest-centroid classifier; the validity floor
    for anything trained on the synthetic corpus."""
    classes = np.unique(train_labels)
    centroids = np.stack([train_feats[train_labels == c].mean(axis=0) for c in classes])
    d2 = ((test_feats[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    pred = classes[np.argmin(d2, axis=1)]
    return float((pred == test_labels).mean())
