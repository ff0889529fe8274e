import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossvoice import autodiff as ad
from crossvoice import layers
from crossvoice.autodiff import Tensor
from crossvoice.errors import InputError


def make_rng(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# highway


def test_highway_closed_gate_is_identity():
    hw = layers.Highway(make_rng(), 4)
    hw.gate.w.data[:] = 0.0
    hw.gate.b.data[:] = -50.0
    x = Tensor(make_rng(1).standard_normal((2, 4)))
    assert np.max(np.abs(hw(x).data - x.data)) < 1e-9


def test_highway_open_gate_is_transform():
    hw = layers.Highway(make_rng(), 4)
    hw.gate.w.data[:] = 0.0
    hw.gate.b.data[:] = 50.0
    x = Tensor(make_rng(1).standard_normal((2, 4)))
    expected = np.maximum(x.data @ hw.transform.w.data + hw.transform.b.data, 0.0)
    assert np.max(np.abs(hw(x).data - expected)) < 1e-9


def test_highway_matches_direct_formula():
    hw = layers.Highway(make_rng(3), 4)
    x = make_rng(4).standard_normal((1, 4))
    h = np.maximum(x @ hw.transform.w.data + hw.transform.b.data, 0.0)
    t = 1.0 / (1.0 + np.exp(-(x @ hw.gate.w.data + hw.gate.b.data)))
    want = t * h + (1.0 - t) * x
    assert np.max(np.abs(hw(Tensor(x)).data - want)) < 1e-12


# ---------------------------------------------------------------------------
# conv bank


def test_conv_bank_k1_delta_identity():
    bank = layers.ConvBank(make_rng(), d_in=3, k_max=1, channels=3)
    bank.convs[0].kernel.data[:] = np.eye(3)[None]
    bank.convs[0].b.data[:] = 0.0
    x = np.abs(make_rng(1).standard_normal((6, 3)))  # positive: relu inactive
    assert np.allclose(bank(Tensor(x)).data, x)


def test_conv_bank_shape_contract():
    bank = layers.ConvBank(make_rng(), d_in=4, k_max=3, channels=5)
    out = bank(Tensor(make_rng(1).standard_normal((5, 4))))
    assert out.shape == (5, 15)


def test_conv_bank_matches_naive_convolution():
    rng = make_rng(2)
    d_in, k_max, channels, t_len = 3, 4, 2, 6
    bank = layers.ConvBank(rng, d_in, k_max, channels)
    x = rng.standard_normal((t_len, d_in))
    got = bank(Tensor(x)).data
    for wi, conv in enumerate(bank.convs):
        width = wi + 1
        pad_l = (width - 1) // 2
        xp = np.pad(x, ((pad_l, width - 1 - pad_l), (0, 0)))
        want = np.zeros((t_len, channels))
        for t in range(t_len):
            for o in range(channels):
                acc = conv.b.data[o]
                for w in range(width):
                    for c in range(d_in):
                        acc += xp[t + w, c] * conv.kernel.data[w, c, o]
                want[t, o] = max(acc, 0.0)
        assert np.max(np.abs(got[:, wi * channels:(wi + 1) * channels] - want)) < 1e-9


# ---------------------------------------------------------------------------
# recurrent layers


def gru_oracle(cell, x_seq, h0):
    """Scalar-level GRU reference, one arithmetic op at a time."""
    n = cell.d_hidden
    w, u, b = cell.w.data, cell.u.data, cell.b.data
    h = h0.copy()
    out = []
    for x in x_seq:
        pre_x = x @ w + b
        pre_h = h @ u
        r = 1.0 / (1.0 + np.exp(-(pre_x[:n] + pre_h[:n])))
        z = 1.0 / (1.0 + np.exp(-(pre_x[n:2 * n] + pre_h[n:2 * n])))
        cand = np.tanh(pre_x[2 * n:] + r * pre_h[2 * n:])
        h = (1.0 - z) * cand + z * h
        out.append(h.copy())
    return np.array(out)


def test_bigru_single_step_uses_same_input_for_both_halves():
    rng = make_rng(5)
    gru = layers.BiGRU(rng, d_in=3, d_hidden=2)
    x = rng.standard_normal((1, 3))
    out = gru(Tensor(x)).data  # [1, 4]
    fwd = gru_oracle(gru.fwd, x, np.zeros(2))
    bwd = gru_oracle(gru.bwd, x, np.zeros(2))
    assert np.allclose(out[0, :2], fwd[0])
    assert np.allclose(out[0, 2:], bwd[0])


def test_bigru_reversal_symmetry_with_tied_cells():
    rng = make_rng(6)
    gru = layers.BiGRU(rng, d_in=3, d_hidden=2)
    for name in ("w", "u", "b"):
        getattr(gru.bwd, name).data[:] = getattr(gru.fwd, name).data
    x = rng.standard_normal((5, 3))
    out = gru(Tensor(x)).data
    out_rev = gru(Tensor(x[::-1].copy())).data
    swapped = np.concatenate([out[:, 2:], out[:, :2]], axis=1)
    assert np.max(np.abs(out_rev - swapped[::-1])) < 1e-12


def test_bigru_matches_scalar_oracle():
    rng = make_rng(7)
    gru = layers.BiGRU(rng, d_in=4, d_hidden=2)
    x = rng.standard_normal((3, 4))
    out = gru(Tensor(x)).data
    fwd = gru_oracle(gru.fwd, x, np.zeros(2))
    bwd = gru_oracle(gru.bwd, x[::-1], np.zeros(2))[::-1]
    assert np.max(np.abs(out - np.concatenate([fwd, bwd], axis=1))) < 1e-9


def test_lstm_cell_matches_scalar_oracle():
    rng = make_rng(8)
    cell = layers.LSTMCell(rng, d_in=3, d_hidden=2)
    x = rng.standard_normal((1, 3))
    h, c = cell(Tensor(x), *cell.zero_state(1))
    n = cell.d_hidden
    gates = x[0] @ cell.w.data + cell.b.data
    i = 1.0 / (1.0 + np.exp(-gates[:n]))
    f = 1.0 / (1.0 + np.exp(-gates[n:2 * n]))
    g = np.tanh(gates[2 * n:3 * n])
    o = 1.0 / (1.0 + np.exp(-gates[3 * n:]))
    c_want = i * g
    h_want = o * np.tanh(c_want)
    assert np.allclose(c.data[0], c_want)
    assert np.allclose(h.data[0], h_want)


# ---------------------------------------------------------------------------
# prenet


def test_prenet_without_dropout_is_deterministic():
    net = layers.Prenet(make_rng(9), 6, (5, 4), p=0.0)
    x = Tensor(make_rng(10).standard_normal((2, 6)))
    a = net(x, rng=np.random.default_rng(0)).data
    b = net(x, rng=np.random.default_rng(99)).data
    assert np.array_equal(a, b)


def test_prenet_full_dropout_zeros_everything():
    net = layers.Prenet(make_rng(9), 6, (5, 4), p=1.0)
    x = Tensor(make_rng(10).standard_normal((2, 6)))
    assert np.array_equal(net(x, rng=np.random.default_rng(0)).data, np.zeros((2, 4)))


def test_prenet_fixed_seed_reproducible():
    net = layers.Prenet(make_rng(9), 6, (5, 4), p=0.5)
    x = Tensor(make_rng(10).standard_normal((2, 6)))
    a = net(x, rng=np.random.default_rng(123)).data
    b = net(x, rng=np.random.default_rng(123)).data
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# location attention


def make_attention(seed=0, d_enc=4, d_dec=3, att_dim=5, n_filters=2, width=3):
    return layers.LocationAttention(make_rng(seed), d_enc, d_dec, att_dim,
                                    n_filters, width)


def test_attention_singleton_memory():
    att = make_attention()
    h = make_rng(1).standard_normal((1, 1, 4))
    enc = layers.EncoderStates(Tensor(h))
    state = att.initial_state(1, 1, 3)
    alpha, context, _ = layers.location_attention_step(att, state, enc)
    assert np.allclose(alpha, [1.0])
    assert np.allclose(context, h[0, 0])


def test_attention_equal_energies_uniform():
    att = make_attention()
    att.query.w.data[:] = 0.0
    att.memory.w.data[:] = 0.0
    att.location.w.data[:] = 0.0
    att.location.b.data[:] = 0.0
    h = make_rng(2).standard_normal((1, 4, 4))
    enc = layers.EncoderStates(Tensor(h))
    state = att.initial_state(1, 4, 3)
    alpha, context, _ = layers.location_attention_step(att, state, enc)
    assert np.allclose(alpha, 0.25)
    assert np.allclose(context, h[0].mean(axis=0))


def test_attention_matches_formula_oracle_and_convex_hull():
    att = make_attention(seed=3, width=3, n_filters=2)
    rng = make_rng(4)
    h = rng.standard_normal((1, 5, 4))
    cum = np.abs(rng.standard_normal((1, 5)))
    s = rng.standard_normal((1, 3))
    state = layers.AttentionState(
        Tensor(np.full((1, 5), 0.2)), Tensor(cum.copy()), Tensor(s.copy()))
    enc = layers.EncoderStates(Tensor(h))
    alpha, context, new_state = layers.location_attention_step(att, state, enc)

    # oracle: direct evaluation of conv -> energies -> softmax -> weighted sum
    kernel = att.loc_conv.kernel.data  # [3, 1, 2]
    padded = np.pad(cum[0], (1, 1))
    f = np.zeros((5, 2))
    for j in range(5):
        for w in range(3):
            f[j] += padded[j + w] * kernel[w, 0]
    e = np.zeros(5)
    for j in range(5):
        pre = (s[0] @ att.query.w.data + h[0, j] @ att.memory.w.data
               + f[j] @ att.location.w.data + att.location.b.data)
        e[j] = np.tanh(pre) @ att.v.data[:, 0]
    want_alpha = np.exp(e - e.max())
    want_alpha /= want_alpha.sum()
    want_context = want_alpha @ h[0]

    assert np.max(np.abs(alpha - want_alpha)) < 1e-9
    assert np.max(np.abs(context - want_context)) < 1e-9
    assert np.all(context >= h[0].min(axis=0) - 1e-12)
    assert np.all(context <= h[0].max(axis=0) + 1e-12)
    assert np.allclose(new_state.alpha_cum.data, cum + alpha)


def test_attention_rejects_empty_memory():
    att = make_attention()
    enc = layers.EncoderStates(Tensor(np.zeros((1, 0, 4))))
    state = att.initial_state(1, 1, 3)
    with pytest.raises(InputError):
        att.step(state, enc)


@given(seed=st.integers(0, 2**31), length=st.integers(1, 8))
@settings(max_examples=40, deadline=None)
def test_attention_weights_form_simplex(seed, length):
    rng = np.random.default_rng(seed)
    att = make_attention(seed=seed % 100)
    h = 3.0 * rng.standard_normal((1, length, 4))
    state = layers.AttentionState(
        Tensor(np.full((1, length), 1.0 / length)),
        Tensor(np.abs(rng.standard_normal((1, length)))),
        Tensor(rng.standard_normal((1, 3))))
    alpha, context, _ = layers.location_attention_step(
        att, state, layers.EncoderStates(Tensor(h)))
    assert np.all(alpha >= 0.0)
    assert abs(alpha.sum() - 1.0) < 1e-9
    assert np.all(context >= h[0].min(axis=0) - 1e-9)
    assert np.all(context <= h[0].max(axis=0) + 1e-9)


def test_cumulative_weights_sum_to_step_count():
    att = make_attention(seed=5)
    rng = make_rng(6)
    h = rng.standard_normal((1, 6, 4))
    enc = layers.EncoderStates(Tensor(h))
    state = att.initial_state(1, 6, 3)
    for t in range(1, 5):
        _, _, state = att.step(state, enc)
        state = layers.AttentionState(state.alpha_prev, state.alpha_cum,
                                      Tensor(rng.standard_normal((1, 3))))
        assert abs(state.alpha_cum.data.sum() - t) < 1e-6
        assert np.all(state.alpha_cum.data >= -1e-12)


# ---------------------------------------------------------------------------
# CBHG


def make_cbhg(seed=0, d_in=4, k_max=2, channels=3, proj=3, n_highway=2, gru=2):
    return layers.CBHG(make_rng(seed), d_in, k_max, channels, proj, n_highway, gru)


@pytest.mark.parametrize("t_len", [1, 2, 7])
def test_cbhg_preserves_time_length(t_len):
    cbhg = make_cbhg()
    out = cbhg(Tensor(make_rng(1).standard_normal((t_len, 4))))
    assert out.shape == (t_len, 4)


def test_cbhg_zero_input_reduces_to_highway_gru_path():
    cbhg = make_cbhg(seed=2)
    x = Tensor(np.zeros((5, 4)))
    got = cbhg(x).data
    y = Tensor(np.zeros((5, 4)))
    for hw in cbhg.highways:
        y = hw(y)
    want = cbhg.gru(y).data
    assert np.max(np.abs(got - want)) < 1e-12


def test_cbhg_equals_stage_composition():
    cbhg = make_cbhg(seed=3)
    x = Tensor(make_rng(4).standard_normal((6, 4)))
    y = layers.max_pool_time_w2(cbhg.bank(x))
    y = ad.relu(cbhg.proj1(y))
    y = cbhg.proj2(y)
    y = ad.add(y, x)
    for hw in cbhg.highways:
        y = hw(y)
    want = cbhg.gru(y).data
    assert np.array_equal(cbhg(x).data, want)


def test_max_pool_w2():
    x = Tensor(np.array([[1.0], [3.0], [2.0]]))
    assert np.allclose(layers.max_pool_time_w2(x).data, [[3.0], [3.0], [2.0]])


# ---------------------------------------------------------------------------
# gradient integrity on random configurations


def _flatten_params(params):
    return list(params.values())


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_highway_grad_check(seed):
    rng = make_rng(400 + seed)
    d = int(rng.integers(2, 5))
    hw = layers.Highway(rng, d)
    x = Tensor(rng.standard_normal((2, d)))
    tensors = [x] + _flatten_params(hw.parameters())

    def f(*ts):
        return ad.sum_(ad.tanh(hw(ts[0])))

    assert ad.grad_check(f, tensors) <= 1e-6


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gru_cell_grad_check(seed):
    rng = make_rng(500 + seed)
    d_in, d_h = int(rng.integers(2, 5)), int(rng.integers(2, 4))
    cell = layers.GRUCell(rng, d_in, d_h)
    x = Tensor(rng.standard_normal((2, d_in)))
    h = Tensor(rng.standard_normal((2, d_h)))
    tensors = [x, h] + _flatten_params(cell.parameters())

    def f(*ts):
        return ad.sum_(cell(ts[0], ts[1]))

    assert ad.grad_check(f, tensors) <= 1e-6


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_lstm_cell_grad_check(seed):
    rng = make_rng(600 + seed)
    d_in, d_h = int(rng.integers(2, 5)), int(rng.integers(2, 4))
    cell = layers.LSTMCell(rng, d_in, d_h)
    x = Tensor(rng.standard_normal((2, d_in)))
    h = Tensor(rng.standard_normal((2, d_h)))
    c = Tensor(rng.standard_normal((2, d_h)))
    tensors = [x, h, c] + _flatten_params(cell.parameters())

    def f(*ts):
        h_new, c_new = cell(ts[0], ts[1], ts[2])
        return ad.sum_(ad.mul(h_new, c_new))

    assert ad.grad_check(f, tensors) <= 1e-6


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_attention_step_grad_check(seed):
    rng = make_rng(700 + seed)
    att = make_attention(seed=700 + seed)
    h = Tensor(rng.standard_normal((1, 5, 4)))
    s = Tensor(rng.standard_normal((1, 3)))
    cum = Tensor(np.abs(rng.standard_normal((1, 5))))
    tensors = [h, s, cum] + _flatten_params(att.parameters())

    def f(*ts):
        state = layers.AttentionState(Tensor(np.full((1, 5), 0.2)), ts[2], ts[1])
        alpha, context, _ = att.step(state, layers.EncoderStates(ts[0]))
        return ad.sum_(ad.mul(context, context)) + ad.sum_(ad.mul(alpha, alpha))

    assert ad.grad_check(f, tensors) <= 1e-5


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cbhg_grad_check(seed):
    rng = make_rng(800 + seed)
    cbhg = make_cbhg(seed=800 + seed, d_in=3, k_max=2, channels=2, proj=2,
                     n_highway=1, gru=2)
    x = Tensor(rng.standard_normal((4, 3)))
    tensors = [x] + _flatten_params(cbhg.parameters())

    def f(*ts):
        return ad.sum_(ad.tanh(cbhg(ts[0])))

    assert ad.grad_check(f, tensors) <= 1e-6
