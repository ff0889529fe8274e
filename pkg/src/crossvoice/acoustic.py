"""CBHG acoustic model: frame-synchronous BN -> acoustic feature mapping,
multi-speaker pretraining with per-frame L1 loss, and text-free speaker
adaptation (fine-tuning on features extracted from audio alone).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dsp
from .autodiff import Tensor
from .bn_extractor import BnExtractorModel, BnSeq, extract_bn
from .config import AcousticSection, OptimSection, ScheduleSection
from .errors import DataError, InputError
from .layers import CBHG, Dense, Prenet, prefixed
from .optim import AdamState
from .training import (apply_gradients, batch_indices, masked_mean_l1,
                       masked_mean_sq, pad_sequences)


class AcousticModel:
    """Two prenet layers -> CBHG -> linear projection, plus a fixed affine
    output stage holding the training-corpus feature statistics (predictions
    start at the corpus mean instead of zero)."""

    def __init__(self, bn_dim: int, acoustic_dim: int, section: AcousticSection,
                 seed: int, dtype=np.float64):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 31]))
        self.bn_dim = bn_dim
        self.acoustic_dim = acoustic_dim
        self.section = section
        self.dtype = dtype
        self.prenet = Prenet(rng, bn_dim, tuple(section.prenet), p=0.5)
        self.cbhg = CBHG(rng, section.prenet[-1], section.bank_k, section.channels,
                         section.proj, section.highways, section.gru)
        self.out = Dense(rng, 2 * section.gru, acoustic_dim)
        self.out_mean = np.zeros(acoustic_dim)
        self.out_std = np.ones(acoustic_dim)
        for t in self.parameters().values():
            t.data = t.data.astype(dtype)

    def parameters(self) -> dict:
        return {**prefixed("prenet", self.prenet.parameters()),
                **prefixed("cbhg", self.cbhg.parameters()),
                **prefixed("out", self.out.parameters())}

    def buffers(self) -> dict:
        return {"buf/out_mean": self.out_mean, "buf/out_std": self.out_std}

    def set_output_stats(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.out_mean = np.asarray(mean, dtype=np.float64)
        self.out_std = np.maximum(np.asarray(std, dtype=np.float64), 1e-6)

    def forward(self, bn: np.ndarray, rng=None) -> Tensor:
        """bn [B, N, bn_dim] -> loss-space features [B, N, acoustic_dim];
        rng enables prenet dropout (training)."""
        if bn.shape[-1] != self.bn_dim:
            raise InputError(f"BN dim {bn.shape[-1]} != model bn_dim {self.bn_dim}")
        return self.forward_tensor(Tensor(np.asarray(bn, dtype=self.dtype)), rng)

    def forward_tensor(self, x: Tensor, rng=None) -> Tensor:
        y = self.out(self.cbhg(self.prenet(x, rng)))
        return ad.add(ad.mul(y, self.out_std.astype(self.dtype)),
                      self.out_mean.astype(self.dtype))


def acoustic_forward(model: AcousticModel, bn: BnSeq,
                     frame_spec: dsp.FrameSpec, max_period: int) -> dsp.AcousticSeq:
    """Pure inference: N BN frames in, N acoustic frames out."""
    if len(bn) == 0:
        return dsp.AcousticSeq(np.zeros((0, model.acoustic_dim - 2)), np.zeros(0),
                               np.zeros(0), frame_spec)
    pred = model.forward(bn.frames[None]).data[0]
    return dsp.AcousticSeq.from_matrix(pred, frame_spec, max_period)


def _pair_loss(model: AcousticModel, chunk: list, rng) -> Tensor:
    """chunk: (utt_id, bn [N, bn_dim], target [N, acoustic_dim]) tuples;
    canonical utt_id order keeps the reduction order-invariant."""
    chunk = sorted(chunk, key=lambda p: p[0])
    bn, mask = pad_sequences([p[1] for p in chunk], dtype=model.dtype)
    targets, _ = pad_sequences([p[2] for p in chunk], dtype=model.dtype)
    pred = model.forward(bn, rng)
    if model.section.loss == "l2":
        return masked_mean_sq(pred, targets, mask)
    return masked_mean_l1(pred, targets, mask)


def batch_loss(model: AcousticModel, chunk: list) -> float:
    """Inference-mode loss of one batch (reporting/evaluation path)."""
    return float(_pair_loss(model, chunk, rng=None).data)


def mean_predictor_loss(pairs: list, loss: str = "l1") -> float:
    """Reference loss of the constant mean predictor over the same frames."""
    stacked = np.concatenate([p[2] for p in pairs])
    mean = stacked.mean(axis=0)
    if loss == "l2":
        return float(((stacked - mean) ** 2).mean())
    return float(np.abs(stacked - mean).mean())


def pretrain_acoustic(model: AcousticModel, pairs: list, section: AcousticSection,
                      optim: OptimSection, seed: int,
                      schedule: ScheduleSection | None = None,
                      steps: int | None = None) -> list:
    """Per-frame norm loss (L1 per the experimental setup; L2 by config),
    Adam with the decay schedule. Returns the (step, loss) trace."""
    if not pairs:
        raise DataError("empty corpus for acoustic training")
    for utt_id, bn, target in pairs:
        if bn.shape[0] != target.shape[0]:
            raise DataError(f"{utt_id}: {bn.shape[0]} BN frames vs "
                            f"{target.shape[0]} acoustic frames")
    params = model.parameters()
    state = AdamState()
    adam_cfg = (schedule or section.schedule).adam(optim.beta1, optim.beta2,
                                                   optim.eps)
    n_steps = section.steps if steps is None else steps
    dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 32]))
    batches = batch_indices(len(pairs), section.batch_size, seed)
    trace = []
    for step in range(n_steps):
        chunk = [pairs[i] for i in next(batches)]
        loss = _pair_loss(model, chunk, dropout_rng)
        loss.backward()
        apply_gradients(params, state, adam_cfg, step)
        trace.append((step, float(loss.data)))
    return trace


# ---------------------------------------------------------------------------
# text-free adaptation


@dataclass(frozen=True)
class AdaptationReport:
    steps_run: int
    n_utterances: int
    pre_distance: float
    post_distance: float
    parameter_change_norm: float

    def __post_init__(self):
        if self.pre_distance < 0 or self.post_distance < 0:
            raise DataError("distances must be nonnegative")


def features_from_audio(audio_list: list, bn_model: BnExtractorModel,
                        analyzer: dsp.AnalyzerConfig, prefix: str = "utt") -> list:
    """The text-free feature path: audio -> (BN, acoustic target) pairs."""
    pairs = []
    for i, audio in enumerate(audio_list):
        feats = dsp.analyze(audio, analyzer)
        bn = extract_bn(bn_model, feats, analyzer.max_period)
        pairs.append((f"{prefix}{i:03d}", bn.frames,
                      feats.matrix(analyzer.max_period)))
    return pairs


def adapt_speaker(model: AcousticModel, audio_only: list,
                  bn_model: BnExtractorModel, analyzer: dsp.AnalyzerConfig,
                  section: AcousticSection, optim: OptimSection, seed: int,
                  probe_audio: list | None = None,
                  steps: int | None = None) -> tuple["AcousticModel", AdaptationReport]:
    """Fine-tune all parameters on one unseen speaker's audio; no transcripts
    exist anywhere on this path (the signature admits none).

    probe_audio holds the report's held-out utterances; when omitted the last
    element of audio_only is held out of fine-tuning and probed instead.
    Returns (adapted copy, report); the input model is left untouched.
    """
    if not audio_only:
        raise DataError("adaptation requires at least one utterance")
    if probe_audio is None:
        if len(audio_only) >= 2:
            probe_audio = audio_only[-1:]
            audio_only = audio_only[:-1]
        else:
            probe_audio = audio_only
    train_pairs = features_from_audio(audio_only, bn_model, analyzer, "adapt")
    probe_pairs = features_from_audio(probe_audio, bn_model, analyzer, "probe")

    adapted = copy.deepcopy(model)
    n_steps = section.adapt_steps if steps is None else steps
    pre = batch_loss(adapted, probe_pairs)
    if n_steps > 0:
        params = adapted.parameters()
        state = AdamState()
        adam_cfg = section.adapt_schedule.adam(optim.beta1, optim.beta2, optim.eps)
        dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 33]))
        batches = batch_indices(len(train_pairs), section.adapt_batch_size, seed)
        for step in range(n_steps):
            chunk = [train_pairs[i] for i in next(batches)]
            loss = _pair_loss(adapted, chunk, dropout_rng)
            loss.backward()
            apply_gradients(params, state, adam_cfg, step)
    post = batch_loss(adapted, probe_pairs)
    base_params = model.parameters()
    delta = np.sqrt(sum(
        float(((t.data - base_params[name].data) ** 2).sum())
        for name, t in adapted.parameters().items()))
    report = AdaptationReport(n_steps, len(train_pairs), pre, post, delta)
    return adapted, report
