"""Deterministic signal processing: framing, bark-cepstral analysis, pitch,
and a minimal cepstral-envelope synthesizer for audible output.

All functions are pure; analyze() twice on the same input is bit-identical.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct, idct

from .errors import ConfigError, InputError

DEFAULT_FLOOR_EPS = 1e-10


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class FrameSpec:
    """Analysis framing: window/hop in samples at a given rate."""

    window_len: int
    hop_len: int
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.hop_len <= 0 or self.window_len <= 0:
            raise ConfigError(
                f"window_len/hop_len must be positive, got {self.window_len}/{self.hop_len}"
            )
        if self.hop_len > self.window_len:
            raise ConfigError(
                f"hop_len {self.hop_len} exceeds window_len {self.window_len}"
            )

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            return 0
        return 1 + (n_samples - self.window_len) // self.hop_len


@dataclass
class AudioBuffer:
    """Mono float samples in nominal [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise InputError("audio samples contain NaN or Inf")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class AcousticFrame:
    """One analysis frame: bark cepstrum plus (period, correlation) pitch."""

    bfcc: np.ndarray
    pitch_period: float
    pitch_correlation: float


@dataclass
class AcousticSeq:
    """Per-frame acoustic features, stored column-wise for numpy friendliness."""

    bfcc: np.ndarray  # [N, n_bfcc]
    pitch_period: np.ndarray  # [N], samples
    pitch_correlation: np.ndarray  # [N], in [0, 1]
    frame_spec: FrameSpec

    def __post_init__(self):
        self.bfcc = np.atleast_2d(np.asarray(self.bfcc, dtype=np.float64))
        if self.bfcc.size == 0:
            self.bfcc = self.bfcc.reshape(0, self.bfcc.shape[-1] if self.bfcc.ndim == 2 else 0)
        self.pitch_period = np.asarray(self.pitch_period, dtype=np.float64).reshape(-1)
        self.pitch_correlation = np.asarray(self.pitch_correlation, dtype=np.float64).reshape(-1)
        n = self.bfcc.shape[0]
        if len(self.pitch_period) != n or len(self.pitch_correlation) != n:
            raise InputError(
                f"acoustic columns disagree: {n} bfcc rows, "
                f"{len(self.pitch_period)} periods, {len(self.pitch_correlation)} correlations"
            )
        for name, arr in (("bfcc", self.bfcc), ("pitch_period", self.pitch_period),
                          ("pitch_correlation", self.pitch_correlation)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"non-finite values in {name}")
        if n and (self.pitch_period.min() < 0):
            raise InputError("negative pitch period")
        if n and (self.pitch_correlation.min() < 0 or self.pitch_correlation.max() > 1):
            raise InputError("pitch correlation outside [0, 1]")

    def __len__(self) -> int:
        return self.bfcc.shape[0]

    @property
    def n_bfcc(self) -> int:
        return self.bfcc.shape[1]

    def frame(self, i: int) -> AcousticFrame:
        return AcousticFrame(self.bfcc[i], float(self.pitch_period[i]),
                             float(self.pitch_correlation[i]))

    def matrix(self, max_period: int | None = None) -> np.ndarray:
        """[N, n_bfcc + 2] feature matrix; period scaled to [0,1] when
        max_period is given (the loss-space convention of the models)."""
        period = self.pitch_period
        if max_period is not None:
            period = period / float(max_period)
        return np.column_stack([self.bfcc, period, self.pitch_correlation])

    @staticmethod
    def from_matrix(m: np.ndarray, frame_spec: FrameSpec,
                    max_period: int | None = None) -> "AcousticSeq":
        m = np.atleast_2d(np.asarray(m, dtype=np.float64))
        bfcc = m[:, :-2]
        period = m[:, -2]
        if max_period is not None:
            period = period * float(max_period)
        # predictions may stray slightly outside the valid range; clamp
        period = np.maximum(period, 0.0)
        corr = np.clip(m[:, -1], 0.0, 1.0)
        return AcousticSeq(bfcc, period, corr, frame_spec)


@dataclass(frozen=True)
class AnalyzerConfig:
    """Everything analyze()/synthesize() need beyond the audio itself."""

    frame_spec: FrameSpec
    n_bands: int = 18
    n_bfcc: int = 18
    floor_eps: float = DEFAULT_FLOOR_EPS
    min_period: int = 40
    max_period: int = 320
    synth_noise_seed: int = 1234

    def __post_init__(self):
        if self.n_bfcc > self.n_bands:
            raise ConfigError(f"n_bfcc {self.n_bfcc} exceeds n_bands {self.n_bands}")
        if self.floor_eps <= 0:
            raise ConfigError("floor_eps must be positive")
        if not (0 < self.min_period < self.max_period < self.frame_spec.window_len):
            raise ConfigError(
                f"need 0 < min_period < max_period < window_len, got "
                f"{self.min_period}/{self.max_period}/{self.frame_spec.window_len}"
            )

    @property
    def acoustic_dim(self) -> int:
        return self.n_bfcc + 2


# ---------------------------------------------------------------------------
# framing


def frame_signal(audio: AudioBuffer, spec: FrameSpec) -> np.ndarray:
    """Slice audio into Hann-windowed frames, [n_frames, window_len].

    No tail padding: audio shorter than one window yields zero frames.
    """
    raw = _raw_frames(audio.samples, spec)
    return raw * np.hanning(spec.window_len)


def _raw_frames(samples: np.ndarray, spec: FrameSpec) -> np.ndarray:
    n = spec.n_frames(len(samples))
    if n == 0:
        return np.zeros((0, spec.window_len))
    idx = np.arange(spec.window_len)[None, :] + spec.hop_len * np.arange(n)[:, None]
    return samples[idx]


# ---------------------------------------------------------------------------
# bark filterbank cepstrum


def hz_to_bark(f):
    """Traunmueller's bark approximation (invertible in closed form)."""
    f = np.asarray(f, dtype=np.float64)
    return 26.81 * f / (1960.0 + f) - 0.53


def bark_to_hz(z):
    z = np.asarray(z, dtype=np.float64)
    return 1960.0 * (z + 0.53) / (26.28 - z)


@lru_cache(maxsize=16)
def bark_filterbank(n_bands: int, window_len: int, sample_rate: int) -> np.ndarray:
    """Triangular bark-spaced filters on rfft bins, [n_bands, window_len//2 + 1].

    Band edges are equally spaced in bark from 0 Hz to Nyquist; peaks of 1.
    """
    if n_bands < 1:
        raise ConfigError(f"n_bands must be >= 1, got {n_bands}")
    n_bins = window_len // 2 + 1
    freqs = np.arange(n_bins) * (sample_rate / window_len)
    edges_hz = bark_to_hz(np.linspace(hz_to_bark(0.0), hz_to_bark(sample_rate / 2.0),
                                      n_bands + 2))
    fb = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        lo, mid, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        rising = (freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - freqs) / max(hi - mid, 1e-12)
        fb[b] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return fb


def bfcc(frame: np.ndarray, n_bands: int = 18, n_bfcc: int = 18,
         floor_eps: float = DEFAULT_FLOOR_EPS, sample_rate: int = 16000) -> np.ndarray:
    """Bark-frequency cepstral coefficients of one (windowed) frame.

    Magnitude spectrum -> triangular bark band powers -> floored natural log
    -> orthonormal DCT-II, first n_bfcc coefficients kept.
    """
    frame = np.asarray(frame, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(frame)):
        raise InputError("NaN/Inf in frame passed to bfcc")
    if n_bfcc > n_bands:
        raise ConfigError(f"n_bfcc {n_bfcc} exceeds n_bands {n_bands}")
    if floor_eps <= 0:
        raise ConfigError("floor_eps must be positive")
    log_e = _band_log_energies(frame[None, :], n_bands, floor_eps, sample_rate)[0]
    return dct(log_e, type=2, norm="ortho")[:n_bfcc]


def _band_log_energies(frames: np.ndarray, n_bands: int, floor_eps: float,
                       sample_rate: int) -> np.ndarray:
    fb = bark_filterbank(n_bands, frames.shape[1], sample_rate)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    energies = power @ fb.T
    return np.log(np.maximum(energies, floor_eps))


# ---------------------------------------------------------------------------
# pitch


def pitch_estimate(frame: np.ndarray, min_period: int, max_period: int,
                   floor_eps: float = DEFAULT_FLOOR_EPS) -> tuple[float, float]:
    """Normalized-autocorrelation pitch of one frame.

    Returns (period in samples, peak correlation clamped to [0, 1]).
    Near-silent frames (mean power < floor_eps) return (0.0, 0.0).
    A fractional true period leaves the integer-lag peak slightly below the
    peak at its (near-integer) multiples, so after taking the argmax the
    divisors lag/2..lag/4 are preferred whenever their local peak reaches
    85% of the maximum; this is the usual subharmonic-error correction.
    """
    frame = np.asarray(frame, dtype=np.float64).reshape(-1)
    if not (0 < min_period < max_period < len(frame)):
        raise ConfigError(
            f"need 0 < min_period < max_period < frame length, got "
            f"{min_period}/{max_period}/{len(frame)}"
        )
    if not np.all(np.isfinite(frame)):
        raise InputError("NaN/Inf in frame passed to pitch_estimate")
    if np.mean(frame * frame) < floor_eps:
        return 0.0, 0.0
    lags = np.arange(min_period, max_period + 1)
    corr = np.empty(len(lags))
    for i, lag in enumerate(lags):
        a = frame[:-lag]
        b = frame[lag:]
        denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
        corr[i] = np.dot(a, b) / denom if denom > 0 else 0.0
    best_idx = int(np.argmax(corr))
    best = corr[best_idx]
    lag = int(lags[best_idx])
    candidates = []
    for divisor in (2, 3, 4):
        cand = int(round(lag / divisor))
        if cand < min_period:
            continue
        lo = max(cand - 2, min_period) - min_period
        hi = min(cand + 2, max_period) - min_period
        local = corr[lo:hi + 1]
        if local.size and local.max() >= 0.85 * best:
            j = lo + int(np.argmax(local))
            candidates.append((corr[j], -int(lags[j]), j))
    if candidates:
        _, _, best_idx = max(candidates)
        best = corr[best_idx]
        lag = int(lags[best_idx])
    # sub-sample refinement: parabola through the peak's neighbors
    offset = 0.0
    if 0 < best_idx < len(corr) - 1:
        left, mid, right = corr[best_idx - 1], corr[best_idx], corr[best_idx + 1]
        denom = left - 2.0 * mid + right
        if denom < 0.0:
            offset = float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))
    return float(lag + offset), float(np.clip(best, 0.0, 1.0))


# ---------------------------------------------------------------------------
# analysis / synthesis


def analyze(audio: AudioBuffer, config: AnalyzerConfig) -> AcousticSeq:
    """Full frame-level analysis: BFCC from Hann-windowed frames, pitch from
    the raw (unwindowed) frames so periodicity is not tapered away."""
    spec = config.frame_spec
    if audio.sample_rate != spec.sample_rate:
        raise InputError(
            f"audio rate {audio.sample_rate} != analyzer rate {spec.sample_rate} "
            "(resampling is out of scope)"
        )
    raw = _raw_frames(audio.samples, spec)
    n = raw.shape[0]
    if n == 0:
        return AcousticSeq(np.zeros((0, config.n_bfcc)), np.zeros(0), np.zeros(0), spec)
    windowed = raw * np.hanning(spec.window_len)
    log_e = _band_log_energies(windowed, config.n_bands, config.floor_eps,
                               spec.sample_rate)
    coeffs = dct(log_e, type=2, norm="ortho", axis=1)[:, :config.n_bfcc]
    periods = np.zeros(n)
    corrs = np.zeros(n)
    for i in range(n):
        periods[i], corrs[i] = pitch_estimate(
            raw[i], config.min_period, config.max_period, config.floor_eps)
    return AcousticSeq(coeffs, periods, corrs, spec)


def synthesize(features: AcousticSeq, config: AnalyzerConfig) -> AudioBuffer:
    """Deterministic cepstral-envelope synthesizer (vocoder stand-in).

    Per frame: invert the DCT to band log energies, spread to a linear
    rfft-bin envelope, excite with a pulse train at the frame's period mixed
    with seeded noise weighted by (1 - correlation), then Hann overlap-add.
    Audible plumbing only; no perceptual quality is claimed.
    """
    spec = features.frame_spec
    n = len(features)
    if n == 0:
        return AudioBuffer(np.zeros(0), spec.sample_rate)
    win = spec.window_len
    hop = spec.hop_len
    n_bands = config.n_bands
    fb = bark_filterbank(n_bands, win, spec.sample_rate)
    bin_weight_sum = fb.sum(axis=0)  # bin coverage for power interpolation
    rng = np.random.default_rng(config.synth_noise_seed)
    window = np.hanning(win)
    out = np.zeros(hop * n + win - hop)
    phase = 0.0  # pulse position carried across frames for continuity
    for i in range(n):
        padded = np.zeros(n_bands)
        padded[:features.n_bfcc] = features.bfcc[i]
        band_power = np.exp(idct(padded, type=2, norm="ortho"))
        envelope = np.sqrt((band_power @ fb) / np.maximum(bin_weight_sum, 1e-12))
        period = features.pitch_period[i]
        corr = features.pitch_correlation[i]
        noise = rng.standard_normal(win)
        excitation = np.sqrt(max(1.0 - corr, 0.0)) * noise
        if period >= 1.0 and corr > 0.0:
            pulses = np.zeros(win)
            pos = phase
            while pos < win:
                pulses[int(pos)] = np.sqrt(period)
                pos += period
            phase = pos - win
            excitation = excitation + np.sqrt(corr) * pulses
        else:
            phase = 0.0
        shaped = np.fft.irfft(np.fft.rfft(excitation) * envelope, n=win)
        out[i * hop:i * hop + win] += shaped * window
    scale = 2.0 / win  # undo the analysis-window energy scale, roughly
    return AudioBuffer(np.clip(out * scale, -1.0, 1.0), spec.sample_rate)


# ---------------------------------------------------------------------------
# WAV I/O (PCM16 mono, little-endian)


def wav_write(path, audio: AudioBuffer) -> None:
    pcm = np.clip(audio.samples, -1.0, 1.0)
    pcm = (pcm * 32767.0).round().astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())


def wav_read(path, expect_rate: int | None = None) -> AudioBuffer:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise InputError(f"{path}: expected mono, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise InputError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
        rate = w.getframerate()
        if expect_rate is not None and rate != expect_rate:
            raise InputError(f"{path}: sample rate {rate} != expected {expect_rate} "
                             "(resampling is out of scope)")
        data = w.readframes(w.getnframes())
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


# ---------------------------------------------------------------------------
# "BNCF" feature container
#
# Flat little-endian binary: magic "BNCF", version u32, n_frames u32,
# frame_dim u32, then the row-major payload. Version 1 carries float32
# feature rows; version 2 is the integer-payload variant (int32) used for
# frame labels.

BNCF_MAGIC = b"BNCF"
_BNCF_FLOAT_VERSION = 1
_BNCF_INT_VERSION = 2


def bncf_write(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2:
        raise InputError(f"BNCF payloads are 2-D, got shape {array.shape}")
    if np.issubdtype(array.dtype, np.integer):
        version, payload = _BNCF_INT_VERSION, array.astype("<i4")
    else:
        version, payload = _BNCF_FLOAT_VERSION, array.astype("<f4")
    header = BNCF_MAGIC + struct.pack("<III", version, array.shape[0], array.shape[1])
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload.tobytes())


def bncf_read(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != BNCF_MAGIC:
            raise InputError(f"{path}: not a BNCF feature file")
        version, n_frames, frame_dim = struct.unpack("<III", header[4:])
        if version == _BNCF_FLOAT_VERSION:
            dtype = np.dtype("<f4")
        elif version == _BNCF_INT_VERSION:
            dtype = np.dtype("<i4")
        else:
            raise InputError(f"{path}: unsupported BNCF version {version}")
        payload = f.read(n_frames * frame_dim * 4)
    if len(payload) != n_frames * frame_dim * 4:
        raise InputError(f"{path}: truncated BNCF payload")
    out = np.frombuffer(payload, dtype=dtype).reshape(n_frames, frame_dim)
    return out.astype(np.int64 if dtype.kind == "i" else np.float64)
