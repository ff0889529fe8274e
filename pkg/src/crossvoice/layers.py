"""Neural building blocks: embedding, prenet, conv bank, highway, recurrent
cells, CBHG, and location-sensitive attention.

Layers are immutable parameter containers after construction; forward passes
are pure given (parameters, input, dropout rng). Everything accepts batched
inputs; single sequences are the batch=1 case unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, InputError


# ---------------------------------------------------------------------------
# initializers


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_in, fan_out))


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Orthogonal [rows, cols] built per square block (recurrent kernels)."""
    blocks = []
    done = 0
    while done < cols:
        width = min(rows, cols - done)
        q, r = np.linalg.qr(rng.standard_normal((rows, rows)))
        q *= np.sign(np.diag(r))
        blocks.append(q[:, :width])
        done += width
    return np.concatenate(blocks, axis=1)


def prefixed(prefix: str, params: dict) -> dict:
    return {f"{prefix}/{name}": t for name, t in params.items()}


# ---------------------------------------------------------------------------
# basic layers


class Dense:
    def __init__(self, rng, d_in: int, d_out: int, bias: bool = True):
        self.w = Tensor(glorot_uniform(rng, d_in, d_out), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim > 2:
            lead = x.shape[:-1]
            y = ad.matmul(ad.reshape(x, (-1, x.shape[-1])), self.w)
            y = ad.reshape(y, lead + (self.w.shape[1],))
        else:
            y = ad.matmul(x, self.w)
        return ad.add(y, self.b) if self.b is not None else y

    def parameters(self):
        out = {"w": self.w}
        if self.b is not None:
            out["b"] = self.b
        return out


class Embedding:
    def __init__(self, rng, vocab: int, dim: int):
        self.table = Tensor(glorot_uniform(rng, vocab, dim), requires_grad=True)

    def __call__(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        vocab = self.table.shape[0]
        if ids.size and (ids.min() < 0 or ids.max() >= vocab):
            bad = int(np.argmax((ids < 0) | (ids >= vocab)))
            raise InputError(f"phoneme id out of inventory (size {vocab}) at position {bad}")
        return ad.embedding(self.table, ids)

    def parameters(self):
        return {"table": self.table}


class Conv1dLayer:
    """Same-padded 1-D convolution along time, [.., T, C_in] -> [.., T, C_out]."""

    def __init__(self, rng, width: int, c_in: int, c_out: int, bias: bool = True):
        if width < 1:
            raise ConfigError(f"conv width must be >= 1, got {width}")
        self.kernel = Tensor(
            glorot_uniform(rng, width * c_in, c_out, shape=(width, c_in, c_out)),
            requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv1d(x, self.kernel, self.b)

    def parameters(self):
        out = {"kernel": self.kernel}
        if self.b is not None:
            out["b"] = self.b
        return out


class Highway:
    """y = T(x) * H(x) + (1 - T(x)) * x with a sigmoid gate and relu transform."""

    def __init__(self, rng, dim: int):
        self.transform = Dense(rng, dim, dim)
        self.gate = Dense(rng, dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.relu(self.transform(x))
        t = ad.sigmoid(self.gate(x))
        return ad.add(ad.mul(t, h), ad.mul(ad.sub(1.0, t), x))

    def parameters(self):
        return {**prefixed("transform", self.transform.parameters()),
                **prefixed("gate", self.gate.parameters())}


class Prenet:
    """Two relu + dropout bottleneck layers in front of a decoder/CBHG."""

    def __init__(self, rng, d_in: int, sizes: tuple[int, int], p: float = 0.5):
        self.fc1 = Dense(rng, d_in, sizes[0])
        self.fc2 = Dense(rng, sizes[0], sizes[1])
        self.p = p

    def __call__(self, x: Tensor, rng=None) -> Tensor:
        """rng None means inference: dropout disabled."""
        h = ad.dropout(ad.relu(self.fc1(x)), self.p, rng)
        return ad.dropout(ad.relu(self.fc2(h)), self.p, rng)

    def parameters(self):
        return {**prefixed("fc1", self.fc1.parameters()),
                **prefixed("fc2", self.fc2.parameters())}


# ---------------------------------------------------------------------------
# recurrent cells


class GRUCell:
    def __init__(self, rng, d_in: int, d_hidden: int):
        self.w = Tensor(glorot_uniform(rng, d_in, 3 * d_hidden), requires_grad=True)
        self.u = Tensor(orthogonal(rng, d_hidden, 3 * d_hidden), requires_grad=True)
        self.b = Tensor(np.zeros(3 * d_hidden), requires_grad=True)
        self.d_hidden = d_hidden

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        n = self.d_hidden
        xw = ad.add(ad.matmul(x, self.w), self.b)
        hu = ad.matmul(h, self.u)
        r = ad.sigmoid(ad.add(xw[:, :n], hu[:, :n]))
        z = ad.sigmoid(ad.add(xw[:, n:2 * n], hu[:, n:2 * n]))
        cand = ad.tanh(ad.add(xw[:, 2 * n:], ad.mul(r, hu[:, 2 * n:])))
        return ad.add(ad.mul(ad.sub(1.0, z), cand), ad.mul(z, h))

    def parameters(self):
        return {"w": self.w, "u": self.u, "b": self.b}


class LSTMCell:
    def __init__(self, rng, d_in: int, d_hidden: int):
        self.w = Tensor(glorot_uniform(rng, d_in, 4 * d_hidden), requires_grad=True)
        self.u = Tensor(orthogonal(rng, d_hidden, 4 * d_hidden), requires_grad=True)
        self.b = Tensor(np.zeros(4 * d_hidden), requires_grad=True)
        self.d_hidden = d_hidden

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        n = self.d_hidden
        gates = ad.add(ad.add(ad.matmul(x, self.w), ad.matmul(h, self.u)), self.b)
        i = ad.sigmoid(gates[:, :n])
        f = ad.sigmoid(gates[:, n:2 * n])
        g = ad.tanh(gates[:, 2 * n:3 * n])
        o = ad.sigmoid(gates[:, 3 * n:])
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def parameters(self):
        return {"w": self.w, "u": self.u, "b": self.b}

    def zero_state(self, batch: int) -> tuple[Tensor, Tensor]:
        dtype = self.w.data.dtype
        return (Tensor(np.zeros((batch, self.d_hidden), dtype=dtype)),
                Tensor(np.zeros((batch, self.d_hidden), dtype=dtype)))


def _run_recurrent(step, x: Tensor, reverse: bool = False) -> Tensor:
    """Drive a cell over [B, T, d]; step(x_t) -> h_t. Returns [B, T, h]."""
    t_len = x.shape[1]
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    outputs = [None] * t_len
    for t in order:
        outputs[t] = step(x[:, t, :])
    return ad.stack(outputs, axis=1)


class BiGRU:
    def __init__(self, rng, d_in: int, d_hidden: int):
        self.fwd = GRUCell(rng, d_in, d_hidden)
        self.bwd = GRUCell(rng, d_in, d_hidden)
        self.d_hidden = d_hidden

    def __call__(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = ad.reshape(x, (1,) + x.shape)
        batch = x.shape[0]
        dtype = self.fwd.w.data.dtype
        state = {"f": Tensor(np.zeros((batch, self.d_hidden), dtype=dtype)),
                 "b": Tensor(np.zeros((batch, self.d_hidden), dtype=dtype))}

        def step_f(xt):
            state["f"] = self.fwd(xt, state["f"])
            return state["f"]

        def step_b(xt):
            state["b"] = self.bwd(xt, state["b"])
            return state["b"]

        out = ad.concat([_run_recurrent(step_f, x), _run_recurrent(step_b, x, reverse=True)],
                        axis=2)
        return ad.reshape(out, out.shape[1:]) if squeeze else out

    def parameters(self):
        return {**prefixed("fwd", self.fwd.parameters()),
                **prefixed("bwd", self.bwd.parameters())}


class BiLSTM:
    def __init__(self, rng, d_in: int, d_hidden: int):
        self.fwd = LSTMCell(rng, d_in, d_hidden)
        self.bwd = LSTMCell(rng, d_in, d_hidden)
        self.d_hidden = d_hidden

    def __call__(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = ad.reshape(x, (1,) + x.shape)
        batch = x.shape[0]
        state = {"f": self.fwd.zero_state(batch), "b": self.bwd.zero_state(batch)}

        def step_f(xt):
            h, c = self.fwd(xt, *state["f"])
            state["f"] = (h, c)
            return h

        def step_b(xt):
            h, c = self.bwd(xt, *state["b"])
            state["b"] = (h, c)
            return h

        out = ad.concat([_run_recurrent(step_f, x), _run_recurrent(step_b, x, reverse=True)],
                        axis=2)
        return ad.reshape(out, out.shape[1:]) if squeeze else out

    def parameters(self):
        return {**prefixed("fwd", self.fwd.parameters()),
                **prefixed("bwd", self.bwd.parameters())}


# ---------------------------------------------------------------------------
# conv bank / CBHG


class ConvBank:
    """Bank of same-padded convolutions with kernel widths 1..K, relu, and
    concatenation along the feature axis: [.., T, d] -> [.., T, K*channels]."""

    def __init__(self, rng, d_in: int, k_max: int, channels: int):
        if k_max < 1:
            raise ConfigError(f"conv bank needs K >= 1, got {k_max}")
        self.convs = [Conv1dLayer(rng, w, d_in, channels) for w in range(1, k_max + 1)]

    def __call__(self, x: Tensor) -> Tensor:
        return ad.concat([ad.relu(conv(x)) for conv in self.convs], axis=x.ndim - 1)

    def parameters(self):
        out = {}
        for i, conv in enumerate(self.convs):
            out.update(prefixed(f"k{i + 1}", conv.parameters()))
        return out


def max_pool_time_w2(x: Tensor) -> Tensor:
    """Width-2, stride-1 max pool along time with same-length output."""
    t_axis = x.ndim - 2
    idx_main = [slice(None)] * x.ndim
    idx_last = [slice(None)] * x.ndim
    idx_main[t_axis] = slice(1, None)
    idx_last[t_axis] = slice(-1, None)
    shifted = ad.concat([x[tuple(idx_main)], x[tuple(idx_last)]], axis=t_axis)
    return ad.maximum(x, shifted)


class CBHG:
    """Conv bank -> max pool -> projections -> residual -> highways -> biGRU."""

    def __init__(self, rng, d_in: int, k_max: int, channels: int, proj: int,
                 n_highway: int, gru_hidden: int):
        self.bank = ConvBank(rng, d_in, k_max, channels)
        self.proj1 = Conv1dLayer(rng, 3, k_max * channels, proj)
        self.proj2 = Conv1dLayer(rng, 3, proj, d_in)
        self.highways = [Highway(rng, d_in) for _ in range(n_highway)]
        self.gru = BiGRU(rng, d_in, gru_hidden)

    def __call__(self, x: Tensor) -> Tensor:
        y = max_pool_time_w2(self.bank(x))
        y = ad.relu(self.proj1(y))
        y = self.proj2(y)
        y = ad.add(y, x)
        for hw in self.highways:
            y = hw(y)
        return self.gru(y)

    def parameters(self):
        out = prefixed("bank", self.bank.parameters())
        out.update(prefixed("proj1", self.proj1.parameters()))
        out.update(prefixed("proj2", self.proj2.parameters()))
        for i, hw in enumerate(self.highways):
            out.update(prefixed(f"highway{i}", hw.parameters()))
        out.update(prefixed("gru", self.gru.parameters()))
        return out


# ---------------------------------------------------------------------------
# location-sensitive attention


@dataclass
class EncoderStates:
    """Encoder memory h [B, L, d_enc] plus an optional validity mask [B, L]."""

    h: Tensor
    mask: np.ndarray | None = None

    @property
    def length(self) -> int:
        return self.h.shape[1]

    def matrix(self) -> np.ndarray:
        """B=1 convenience view, [L, d_enc]."""
        return self.h.data[0]


@dataclass
class AttentionState:
    """alpha_prev/alpha_cum [B, L] and the previous decoder state [B, d_dec]."""

    alpha_prev: Tensor
    alpha_cum: Tensor
    s_prev: Tensor

    def validate(self) -> None:
        a = self.alpha_prev.data
        if np.any(a < -1e-9) or np.max(np.abs(a.sum(axis=-1) - 1.0)) > 1e-6:
            raise InputError("alpha_prev is not a probability vector")
        if np.any(self.alpha_cum.data < -1e-9):
            raise InputError("alpha_cum has negative entries")


class LocationAttention:
    """Energies w^T tanh(W s_prev + V h_j + U f_j + b) where f is a same-padded
    convolution of the cumulative attention weights."""

    def __init__(self, rng, d_enc: int, d_dec: int, att_dim: int,
                 n_filters: int, kernel_width: int):
        self.query = Dense(rng, d_dec, att_dim, bias=False)
        self.memory = Dense(rng, d_enc, att_dim, bias=False)
        self.location = Dense(rng, n_filters, att_dim, bias=True)
        self.loc_conv = Conv1dLayer(rng, kernel_width, 1, n_filters, bias=False)
        self.v = Tensor(glorot_uniform(rng, att_dim, 1), requires_grad=True)

    def initial_state(self, batch: int, length: int, d_dec: int) -> AttentionState:
        dtype = self.v.data.dtype
        alpha0 = np.zeros((batch, length), dtype=dtype)
        alpha0[:, 0] = 1.0
        return AttentionState(Tensor(alpha0),
                              Tensor(np.zeros((batch, length), dtype=dtype)),
                              Tensor(np.zeros((batch, d_dec), dtype=dtype)))

    def keys(self, enc: EncoderStates) -> Tensor:
        return self.memory(enc.h)

    def step(self, state: AttentionState, enc: EncoderStates,
             keys: Tensor | None = None) -> tuple[Tensor, Tensor, AttentionState]:
        """One attention step: returns (alpha_t [B, L], context [B, d_enc],
        state with alpha_prev/alpha_cum advanced; s_prev untouched)."""
        if enc.length == 0:
            raise InputError("attention over an empty encoder sequence")
        if keys is None:
            keys = self.keys(enc)
        batch, length = state.alpha_cum.shape
        f = self.loc_conv(ad.reshape(state.alpha_cum, (batch, length, 1)))
        loc = self.location(f)
        q = ad.reshape(self.query(state.s_prev), (batch, 1, keys.shape[2]))
        e = ad.matmul(ad.tanh(ad.add(ad.add(q, keys), loc)), self.v)
        e = ad.reshape(e, (batch, length))
        if enc.mask is not None:
            bias = np.where(enc.mask > 0, 0.0, -1e9).astype(e.data.dtype)
            e = ad.add(e, bias)
        alpha = ad.softmax(e, axis=1)
        context = ad.sum_(ad.mul(ad.reshape(alpha, (batch, length, 1)), enc.h), axis=1)
        new_state = AttentionState(alpha, ad.add(state.alpha_cum, alpha), state.s_prev)
        return alpha, context, new_state

    def parameters(self):
        return {**prefixed("query", self.query.parameters()),
                **prefixed("memory", self.memory.parameters()),
                **prefixed("location", self.location.parameters()),
                **prefixed("conv", self.loc_conv.parameters()),
                "v": self.v}


def location_attention_step(layer: LocationAttention, state: AttentionState,
                            enc: EncoderStates) -> tuple[np.ndarray, np.ndarray, AttentionState]:
    """Single-sequence contract: validates the state, returns numpy
    (alpha_t [L], c_t [d_enc]) plus the advanced state."""
    state.validate()
    alpha, context, new_state = layer.step(state, enc)
    return alpha.data[0], context.data[0], new_state
