"""Toy speaker-independent frame classifier; the pre-softmax hidden layer
(the last recurrent layer's output) is the bottleneck feature tap.

The real system this stands in for is a large ASR network trained on tens
of thousands of speakers; here a 2-layer unidirectional LSTM trained on the
multi-speaker synthetic corpus honors the same contract: frame-synchronous
features taken right before the softmax, trained across enough speakers to
be usably speaker-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dsp
from .autodiff import Tensor
from .config import BnSection, OptimSection
from .errors import DataError, InputError
from .layers import Dense, LSTMCell, prefixed
from .optim import AdamState
from .training import (apply_gradients, batch_indices, masked_cross_entropy,
                       pad_sequences)


@dataclass
class BnSeq:
    """Frame-synchronous bottleneck features, [N, bn_dim]."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=np.float64))
        if not np.all(np.isfinite(self.frames)):
            raise InputError("non-finite values in BN features")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def bn_dim(self) -> int:
        return self.frames.shape[1]


class BnExtractorModel:
    """2 unidirectional LSTM layers + softmax projection; BN features are the
    second LSTM's hidden states (softmax layer excluded)."""

    def __init__(self, feat_dim: int, n_phones: int, section: BnSection,
                 seed: int, dtype=np.float64):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
        self.feat_dim = feat_dim
        self.n_phones = n_phones
        self.bn_dim = section.bn_dim
        self.context = section.context
        self.dtype = dtype
        spliced = feat_dim * (2 * section.context + 1)
        self.lstm1 = LSTMCell(rng, spliced, section.hidden)
        self.lstm2 = LSTMCell(rng, section.hidden, section.bn_dim)
        self.out = Dense(rng, section.bn_dim, n_phones)
        self.feat_mean = np.zeros(feat_dim)
        self.feat_std = np.ones(feat_dim)
        for t in self.parameters().values():
            t.data = t.data.astype(dtype)

    def parameters(self) -> dict:
        return {**prefixed("lstm1", self.lstm1.parameters()),
                **prefixed("lstm2", self.lstm2.parameters()),
                **prefixed("out", self.out.parameters())}

    def buffers(self) -> dict:
        return {"buf/feat_mean": self.feat_mean, "buf/feat_std": self.feat_std}

    def set_feature_stats(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.feat_mean = np.asarray(mean, dtype=np.float64)
        self.feat_std = np.maximum(np.asarray(std, dtype=np.float64), 1e-6)

    def forward(self, feats: np.ndarray) -> tuple[Tensor, Tensor]:
        """feats [B, T, feat_dim] -> (bn [B, T, bn_dim], logits [B, T, n_phones])."""
        if feats.shape[-1] != self.feat_dim:
            raise InputError(f"feature dim {feats.shape[-1]} != model input "
                             f"{self.feat_dim}")
        normed = (feats - self.feat_mean) / self.feat_std
        x = Tensor(_splice(normed, self.context).astype(self.dtype))
        batch = x.shape[0]
        h1, c1 = self.lstm1.zero_state(batch)
        h2, c2 = self.lstm2.zero_state(batch)
        taps = []
        for t in range(x.shape[1]):
            h1, c1 = self.lstm1(x[:, t, :], h1, c1)
            h2, c2 = self.lstm2(h1, h2, c2)
            taps.append(h2)
        bn = ad.stack(taps, axis=1)
        return bn, self.out(bn)


def _splice(feats: np.ndarray, context: int) -> np.ndarray:
    """Concatenate +-context neighbor frames (edge-replicated) per frame."""
    if context == 0:
        return feats
    t_len = feats.shape[1]
    shifts = []
    for offset in range(-context, context + 1):
        idx = np.clip(np.arange(t_len) + offset, 0, t_len - 1)
        shifts.append(feats[:, idx, :])
    return np.concatenate(shifts, axis=2)


def extract_bn(model: BnExtractorModel, features: dsp.AcousticSeq,
               max_period: int) -> BnSeq:
    """Pure function of (model, features); one BN frame per acoustic frame."""
    if len(features) == 0:
        return BnSeq(np.zeros((0, model.bn_dim)))
    mat = features.matrix(max_period)
    bn, _ = model.forward(mat[None])
    return BnSeq(bn.data[0])


def classify_frames(model: BnExtractorModel, feats: np.ndarray) -> np.ndarray:
    _, logits = model.forward(feats[None])
    return np.argmax(logits.data[0], axis=-1)


def train_bn_extractor(pairs: list, n_phones: int, section: BnSection,
                       optim: OptimSection, max_period: int, seed: int,
                       dtype=np.float64):
    """pairs: (utt_id, feature matrix [N, D], labels [N]). Cross-entropy
    training until held-out frame accuracy clears the target (plus margin)
    or the step budget runs out.

    Returns (model, loss trace [(step, loss)], accuracy trace [(step, acc)]).
    """
    if not pairs:
        raise DataError("empty corpus for BN extractor training")
    for utt_id, feats, labels in pairs:
        if feats.shape[0] != labels.shape[0]:
            raise DataError(f"{utt_id}: {feats.shape[0]} frames vs "
                            f"{labels.shape[0]} labels")
    feat_dim = pairs[0][1].shape[1]
    model = BnExtractorModel(feat_dim, n_phones, section, seed, dtype)
    train, holdout = holdout_split(pairs, section.holdout_fraction, seed)

    stacked = np.concatenate([p[1] for p in train])
    model.set_feature_stats(stacked.mean(axis=0), stacked.std(axis=0))

    params = model.parameters()
    state = AdamState()
    adam_cfg = section.schedule.adam(optim.beta1, optim.beta2, optim.eps)
    trace, acc_trace = [], []
    batches = batch_indices(len(train), section.batch_size, seed)
    stop_at = section.target_accuracy + section.early_stop_margin
    for step in range(section.steps):
        chunk = [train[i] for i in next(batches)]
        feats, mask = pad_sequences([p[1] for p in chunk], dtype=dtype)
        labels, _ = _pad_labels([p[2] for p in chunk])
        _, logits = model.forward(feats)
        loss = masked_cross_entropy(logits, labels, mask)
        loss.backward()
        apply_gradients(params, state, adam_cfg, step)
        trace.append((step, float(loss.data)))
        if (step + 1) % section.eval_every == 0 or step == section.steps - 1:
            acc = holdout_accuracy(model, holdout)
            acc_trace.append((step, acc))
            if acc >= stop_at:
                break
    return model, trace, acc_trace


def holdout_split(pairs: list, holdout_fraction: float, seed: int):
    """The seeded utterance-level split used for the accuracy target; exposed
    so validity oracles can run on the identical split."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 12]))
    order = rng.permutation(len(pairs))
    n_holdout = max(1, int(round(holdout_fraction * len(pairs))))
    holdout = [pairs[i] for i in order[:n_holdout]]
    train = [pairs[i] for i in order[n_holdout:]] or holdout
    return train, holdout


def _pad_labels(label_lists: list) -> tuple[np.ndarray, np.ndarray]:
    n_max = max(len(l) for l in label_lists)
    out = np.zeros((len(label_lists), n_max), dtype=np.int64)
    mask = np.zeros((len(label_lists), n_max))
    for i, l in enumerate(label_lists):
        out[i, :len(l)] = l
        mask[i, :len(l)] = 1.0
    return out, mask


def holdout_accuracy(model: BnExtractorModel, pairs: list) -> float:
    correct = total = 0
    for _, feats, labels in pairs:
        pred = classify_frames(model, feats)
        correct += int((pred == labels).sum())
        total += len(labels)
    return correct / max(total, 1)
