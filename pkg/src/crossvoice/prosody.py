"""Latent prosody model: phoneme sequence -> frame sequence through an
encoder, location-sensitive attention and an autoregressive 2-layer LSTM
decoder, trained teacher-forced with L2 loss plus a stop-token term.

The same architecture doubles as the baseline system when out_dim is the
acoustic feature width (phonemes -> acoustic features directly).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import OptimSection, ProsodySection, ScheduleSection
from .errors import DataError, InputError
from .layers import (AttentionState, BiLSTM, Conv1dLayer, Dense, Embedding,
                     EncoderStates, LocationAttention, LSTMCell, Prenet,
                     prefixed)
from .optim import AdamState
from .training import (apply_gradients, batch_indices, masked_bce_with_logits,
                       masked_mean_sq, pad_ids, pad_sequences)


@dataclass(frozen=True)
class PhonemeSeq:
    """Integer-encoded phoneme string."""

    ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if any(i < 0 for i in self.ids):
            raise InputError("negative phoneme id")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class DecoderState:
    h1: Tensor
    c1: Tensor
    h2: Tensor
    c2: Tensor


class ProsodyModel:
    def __init__(self, section: ProsodySection, inventory_size: int,
                 out_dim: int, seed: int, dtype=np.float64):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 21]))
        self.section = section
        self.inventory_size = inventory_size
        self.out_dim = out_dim
        self.dtype = dtype
        emb = section.emb_dim
        self.embedding = Embedding(rng, inventory_size, emb)
        self.enc_convs = [Conv1dLayer(rng, section.enc_conv_width, emb, emb)
                          for _ in range(section.enc_conv_layers)]
        self.enc_rnn = BiLSTM(rng, emb, section.d_enc // 2)
        self.attention = LocationAttention(rng, section.d_enc, section.d_dec,
                                           section.att_dim, section.att_filters,
                                           section.att_kernel)
        self.prenet = Prenet(rng, out_dim, tuple(section.prenet), section.dropout)
        dec_in = section.prenet[-1] + section.d_enc
        self.lstm1 = LSTMCell(rng, dec_in, section.d_dec)
        self.lstm2 = LSTMCell(rng, section.d_dec, section.d_dec)
        self.out = Dense(rng, section.d_dec + section.d_enc, out_dim)
        self.stop = Dense(rng, section.d_dec + section.d_enc, 1)
        # loss-space affine for acoustic targets; identity for BN targets
        self.out_mean = np.zeros(out_dim)
        self.out_std = np.ones(out_dim)
        for t in self.parameters().values():
            t.data = t.data.astype(dtype)

    def parameters(self) -> dict:
        params = {**prefixed("emb", self.embedding.parameters())}
        for i, conv in enumerate(self.enc_convs):
            params.update(prefixed(f"enc_conv{i}", conv.parameters()))
        params.update(prefixed("enc_rnn", self.enc_rnn.parameters()))
        params.update(prefixed("att", self.attention.parameters()))
        params.update(prefixed("prenet", self.prenet.parameters()))
        params.update(prefixed("dec_lstm1", self.lstm1.parameters()))
        params.update(prefixed("dec_lstm2", self.lstm2.parameters()))
        params.update(prefixed("out", self.out.parameters()))
        params.update(prefixed("stop", self.stop.parameters()))
        return params

    def buffers(self) -> dict:
        return {"buf/out_mean": self.out_mean, "buf/out_std": self.out_std}

    def set_output_stats(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.out_mean = np.asarray(mean, dtype=np.float64)
        self.out_std = np.maximum(np.asarray(std, dtype=np.float64), 1e-6)

    def to_network(self, frames: np.ndarray) -> np.ndarray:
        return ((frames - self.out_mean) / self.out_std).astype(self.dtype)

    def to_features(self, net_frames: np.ndarray) -> np.ndarray:
        return net_frames * self.out_std + self.out_mean

    # forward pieces ------------------------------------------------------
    def encode_batch(self, ids: np.ndarray, mask: np.ndarray | None) -> EncoderStates:
        x = self.embedding(ids)
        if mask is not None:
            mask = mask.astype(self.dtype)
            x = ad.mul(x, mask[:, :, None])
        for conv in self.enc_convs:
            x = ad.relu(conv(x))
            if mask is not None:
                x = ad.mul(x, mask[:, :, None])
        return EncoderStates(self.enc_rnn(x), mask)

    def initial_decoder_state(self, batch: int) -> DecoderState:
        zeros = lambda: Tensor(np.zeros((batch, self.section.d_dec), dtype=self.dtype))
        return DecoderState(zeros(), zeros(), zeros(), zeros())

    def decode_step_net(self, state: DecoderState, context: Tensor,
                        y_prev_net: Tensor, rng) -> tuple[Tensor, Tensor, DecoderState]:
        """One autoregressive step in network space. rng gates prenet dropout."""
        p = self.prenet(y_prev_net, rng)
        x = ad.concat([p, context], axis=1)
        h1, c1 = self.lstm1(x, state.h1, state.c1)
        h2, c2 = self.lstm2(h1, state.h2, state.c2)
        joined = ad.concat([h2, context], axis=1)
        return (self.out(joined), self.stop(joined)[:, 0],
                DecoderState(h1, c1, h2, c2))


def encode(model: ProsodyModel, x: PhonemeSeq) -> EncoderStates:
    """Single-sequence encoder contract: h has len(x) rows; ids validated."""
    ids = np.asarray(x.ids, dtype=np.int64)[None, :]
    if ids.size == 0:
        raise InputError("cannot encode an empty phoneme sequence")
    return model.encode_batch(ids, None)


def decode_step(model: ProsodyModel, state: DecoderState | None,
                context: np.ndarray, y_prev: np.ndarray):
    """Single-step inference contract (dropout off). state None starts from
    zeros; y_prev is a loss-space frame. Returns (y_t, stop_logit, state)."""
    if state is None:
        state = model.initial_decoder_state(1)
    y_prev_net = Tensor(model.to_network(np.asarray(y_prev, dtype=np.float64))[None])
    context_t = Tensor(np.asarray(context, dtype=model.dtype)[None])
    y_net, stop_logit, new_state = model.decode_step_net(state, context_t,
                                                         y_prev_net, rng=None)
    return (model.to_features(y_net.data[0]), float(stop_logit.data[0]), new_state)


# ---------------------------------------------------------------------------
# training


def _stop_targets(mask: np.ndarray) -> np.ndarray:
    targets = np.zeros_like(mask)
    lengths = mask.sum(axis=1).astype(int)
    for i, n in enumerate(lengths):
        if n > 0:
            targets[i, n - 1] = 1.0
    return targets


def teacher_forced_loss(model: ProsodyModel, chunk: list, rng,
                        lambda_stop: float) -> Tensor:
    """chunk: (utt_id, phoneme id list, target frames [N, out_dim]) tuples.
    Batch assembly is canonical (sorted by utt_id) so the reduction is
    invariant to the caller's ordering."""
    chunk = sorted(chunk, key=lambda p: p[0])
    ids, id_mask = pad_ids([p[1] for p in chunk], dtype=model.dtype)
    targets, t_mask = pad_sequences([model.to_network(p[2]) for p in chunk],
                                    dtype=model.dtype)
    batch, n_frames = targets.shape[0], targets.shape[1]
    enc = model.encode_batch(ids, id_mask)
    keys = model.attention.keys(enc)
    att_state = model.attention.initial_state(batch, ids.shape[1],
                                              model.section.d_dec)
    dec = model.initial_decoder_state(batch)
    y_prev = Tensor(np.zeros((batch, model.out_dim), dtype=model.dtype))
    outputs, stops = [], []
    for t in range(n_frames):
        _, context, att_state = model.attention.step(att_state, enc, keys)
        y_t, stop_t, dec = model.decode_step_net(dec, context, y_prev, rng)
        att_state = AttentionState(att_state.alpha_prev, att_state.alpha_cum, dec.h2)
        outputs.append(y_t)
        stops.append(stop_t)
        y_prev = Tensor(targets[:, t])  # teacher forcing, ratio 1.0
    pred = ad.stack(outputs, axis=1)
    loss = masked_mean_sq(pred, targets, t_mask)
    if lambda_stop > 0.0:
        stop_loss = masked_bce_with_logits(ad.stack(stops, axis=1),
                                           _stop_targets(t_mask), t_mask)
        loss = ad.add(loss, ad.mul(stop_loss, lambda_stop))
    return loss


def train_prosody(model: ProsodyModel, pairs: list, section: ProsodySection,
                  optim: OptimSection, seed: int,
                  schedule: ScheduleSection | None = None,
                  steps: int | None = None) -> list:
    """Teacher-forced Adam training; returns the (step, loss) trace."""
    if not pairs:
        raise DataError("empty corpus for sequence-to-sequence training")
    params = model.parameters()
    state = AdamState()
    adam_cfg = (schedule or section.schedule).adam(optim.beta1, optim.beta2,
                                                   optim.eps)
    n_steps = section.steps if steps is None else steps
    dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 22]))
    batches = batch_indices(len(pairs), section.batch_size, seed)
    trace = []
    for step in range(n_steps):
        chunk = [pairs[i] for i in next(batches)]
        loss = teacher_forced_loss(model, chunk, dropout_rng, section.lambda_stop)
        loss.backward()
        apply_gradients(params, state, adam_cfg, step)
        trace.append((step, float(loss.data)))
    return trace


def train_baseline(model: ProsodyModel, pairs: list, section: ProsodySection,
                   optim: OptimSection, seed: int,
                   schedule: ScheduleSection | None = None,
                   steps: int | None = None) -> list:
    """Baseline mode: same loop, acoustic-feature targets. The model must
    have been built with out_dim == acoustic dim and output stats set."""
    if pairs and pairs[0][2].shape[1] != model.out_dim:
        raise DataError(f"baseline target dim {pairs[0][2].shape[1]} != model "
                        f"out_dim {model.out_dim}")
    return train_prosody(model, pairs, section, optim, seed, schedule, steps)


def finetune(model: ProsodyModel, pairs: list, section: ProsodySection,
             optim: OptimSection, seed: int, schedule: ScheduleSection,
             steps: int) -> list:
    """Small-set fine-tuning entry point (the baseline's adaptation path)."""
    return train_prosody(model, pairs, section, optim, seed, schedule, steps)


def clone_model(model: ProsodyModel) -> ProsodyModel:
    return copy.deepcopy(model)


# ---------------------------------------------------------------------------
# synthesis


def synthesize_frames(model: ProsodyModel, x: PhonemeSeq, max_frames: int,
                      stop_threshold: float | None = None):
    """Autoregressive synthesis. Returns (frames [N, out_dim] in loss space,
    alignment [N, L], truncated flag). Deterministic: dropout disabled."""
    if len(x) == 0:
        raise InputError("cannot synthesize from an empty phoneme sequence")
    threshold = model.section.stop_threshold if stop_threshold is None else stop_threshold
    enc = encode(model, x)
    keys = model.attention.keys(enc)
    att_state = model.attention.initial_state(1, len(x), model.section.d_dec)
    dec = model.initial_decoder_state(1)
    y_prev = Tensor(np.zeros((1, model.out_dim), dtype=model.dtype))
    frames, aligns = [], []
    truncated = True
    for _ in range(max_frames):
        alpha, context, att_state = model.attention.step(att_state, enc, keys)
        y_t, stop_t, dec = model.decode_step_net(dec, context, y_prev, rng=None)
        frames.append(model.to_features(y_t.data[0]))
        aligns.append(alpha.data[0])
        stop_prob = 1.0 / (1.0 + np.exp(-float(stop_t.data[0])))
        # detach: inference keeps no graph across steps
        att_state = AttentionState(Tensor(att_state.alpha_prev.data),
                                   Tensor(att_state.alpha_cum.data),
                                   Tensor(dec.h2.data))
        dec = DecoderState(Tensor(dec.h1.data), Tensor(dec.c1.data),
                           Tensor(dec.h2.data), Tensor(dec.c2.data))
        y_prev = Tensor(y_t.data)
        if stop_prob > threshold:
            truncated = False
            break
    n = len(frames)
    frames = np.array(frames) if n else np.zeros((0, model.out_dim))
    aligns = np.array(aligns) if n else np.zeros((0, len(x)))
    return frames, aligns, truncated


def alignment_monotonicity(alignment: np.ndarray) -> float:
    """Fraction of steps whose attention argmax is >= the previous one."""
    if alignment.shape[0] <= 1:
        return 1.0
    peaks = np.argmax(alignment, axis=1)
    return float(np.mean(peaks[1:] >= peaks[:-1]))
