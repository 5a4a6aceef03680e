import numpy as np
import pytest

from dcfnet import functional as fn
from dcfnet import nn
from dcfnet.autograd import Tensor


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64))


# -- conv2d -----------------------------------------------------------------

def _reference_conv(x, w, b, dilation, groups):
    """Direct loop cross-correlation with zero 'same' padding, stride 1."""
    C, H, W = x.shape
    Co, Cig, kh, kw = w.shape
    ph, pw = dilation * (kh - 1) // 2, dilation * (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((Co, H, W))
    cog = Co // groups
    for o in range(Co):
        g = o // cog
        for ci in range(Cig):
            for i in range(kh):
                for j in range(kw):
                    out[o] += w[o, ci, i, j] * xp[g * Cig + ci, i * dilation:i * dilation + H, j * dilation:j * dilation + W]
        if b is not None:
            out[o] += b[o]
    return out


@pytest.mark.parametrize("groups,dilation,k", [(1, 1, 3), (1, 2, 3), (2, 1, 3), (4, 1, 3), (4, 3, 3), (1, 1, 1), (2, 1, 5)])
def test_conv2d_matches_loop_reference(rng, groups, dilation, k):
    x = rng.standard_normal((4, 6, 7))
    w = rng.standard_normal((8, 4 // groups, k, k))
    b = rng.standard_normal(8)
    out = fn.conv2d(T(x), T(w), T(b), dilation=dilation, groups=groups).data
    np.testing.assert_allclose(out, _reference_conv(x, w, b, dilation, groups), atol=1e-12)


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((1, 5, 6))
    np.testing.assert_array_equal(fn.conv2d(T(x), T(np.ones((1, 1, 1, 1)))).data, x)


def test_depthwise_box_filter_on_constant():
    c = 2.5
    x = np.full((3, 6, 7), c)
    w = np.full((3, 1, 3, 3), 1 / 9)
    out = fn.conv2d(T(x), T(w), groups=3).data
    np.testing.assert_allclose(out[:, 1:-1, 1:-1], c, rtol=1e-14)
    border = np.ones_like(out, dtype=bool)
    border[:, 1:-1, 1:-1] = False
    assert np.all(out[border] < c)


def test_doubling_conv_shape():
    x = Tensor(np.zeros((256, 129, 63), dtype=np.float32))
    w = Tensor(np.zeros((512, 256, 1, 1), dtype=np.float32))
    assert fn.conv2d(x, w).shape == (512, 129, 63)


@pytest.mark.parametrize("k", [1, 3, 5, 7])
def test_same_padding_preserves_extent(rng, k):
    x = T(rng.standard_normal((2, 3, 9, 4)))
    assert fn.conv2d(x, T(rng.standard_normal((5, 3, k, k))), dilation=2).shape == (2, 5, 9, 4)


def test_conv2d_errors(rng):
    x = T(rng.standard_normal((4, 5, 5)))
    with pytest.raises(ValueError):
        fn.conv2d(x, T(rng.standard_normal((6, 4, 3, 3))), groups=3)
    with pytest.raises(ValueError):
        fn.conv2d(x, T(rng.standard_normal((6, 3, 3, 3))))


# -- softmax / norm / prelu ------------------------------------------------------

def test_softmax_rows_sum_to_one(rng):
    s = fn.softmax(T(50 * rng.standard_normal((7, 11))), axis=-1).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(s >= 0)


def test_rms_norm_reference_values():
    out = fn.rms_norm(T([3.0, 4.0]), T([1.0, 1.0]), eps=0.0).data
    np.testing.assert_allclose(out, [3 / np.sqrt(12.5), 4 / np.sqrt(12.5)], rtol=1e-12)
    np.testing.assert_allclose(out, [0.84853, 1.13137], atol=1e-5)
    np.testing.assert_allclose(fn.rms_norm(T([2.0, 2.0, 2.0]), T(np.ones(3))).data, 1.0, rtol=1e-8)


def test_prelu():
    out = fn.prelu(T([-2.0, 3.0]), T([0.25])).data
    np.testing.assert_array_equal(out, [-0.5, 3.0])


# -- attention ------------------------------------------------------------------

def _identity_proj(d):
    eye = T(np.eye(d))
    return {k: (eye, None) for k in "qkvo"}


def test_attention_uniform_when_keys_equal(rng):
    d = 6
    q = T(rng.standard_normal((4, d)))
    k = T(np.tile(rng.standard_normal(d), (5, 1)))
    v = T(rng.standard_normal((5, d)))
    out, w = nn.multi_head_attention(q, k, v, 1, _identity_proj(d), return_weights=True)
    np.testing.assert_allclose(w.data, 1 / 5, rtol=1e-12)
    np.testing.assert_allclose(out.data, np.tile(v.data.mean(axis=0), (4, 1)), atol=1e-12)


def test_mha_weights_normalised_and_shape(rng):
    m = nn.MultiHeadAttention(64, 4, rng)
    x = T(rng.standard_normal((63, 64)))
    out, w = m(x, return_weights=True)
    assert out.shape == (63, 64)
    np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-12)


def test_mha_rejects_indivisible_heads(rng):
    with pytest.raises(ValueError):
        nn.MultiHeadAttention(10, 4, rng)


# -- recurrent --------------------------------------------------------------------

def test_blstm_zero_weights_give_zero_output(rng):
    m = nn.BLSTM(5, 3, rng)
    for p in m.parameters().values():
        p.data[...] = 0.0
    np.testing.assert_array_equal(m(T(rng.standard_normal((7, 5)))).data, 0.0)


def test_blstm_full_preset_shape(rng):
    m = nn.BLSTM(64, 128, rng, np.float32)
    assert m(Tensor(rng.standard_normal((63, 64)).astype(np.float32))).shape == (63, 256)


def test_blstm_empty_sequence_rejected(rng):
    m = nn.BLSTM(3, 2, rng)
    with pytest.raises(ValueError):
        m(T(np.zeros((0, 3))))


def _lstm_oracle(x, w_ih, w_hh, b):
    """Hand-rolled single-direction LSTM (gate order i, f, g, o)."""
    H = w_hh.shape[1]
    h, c, out = np.zeros(H), np.zeros(H), []
    sig = lambda z: 1 / (1 + np.exp(-z))
    for xt in x:
        z = w_ih @ xt + w_hh @ h + b
        i, f, g, o = sig(z[:H]), sig(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), sig(z[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h)
    return np.array(out)


def test_lstm_matches_hand_rolled_oracle(rng):
    x = rng.standard_normal((3, 4))
    w_ih, w_hh, b = rng.standard_normal((8, 4)), rng.standard_normal((8, 2)), rng.standard_normal(8)
    out = fn.lstm(T(x[None]), T(w_ih), T(w_hh), T(b)).data[0]
    np.testing.assert_allclose(out, _lstm_oracle(x, w_ih, w_hh, b), atol=1e-12)
    rev = fn.lstm(T(x[None]), T(w_ih), T(w_hh), T(b), reverse=True).data[0]
    np.testing.assert_allclose(rev, _lstm_oracle(x[::-1], w_ih, w_hh, b)[::-1], atol=1e-12)


def test_blstm_tied_directions_reverse_symmetry(rng):
    m = nn.BLSTM(4, 3, rng)
    for name in ("w_ih", "w_hh", "bias"):
        getattr(m.bwd, name).data = getattr(m.fwd, name).data.copy()
    x = rng.standard_normal((3, 4))
    out = m(T(x)).data
    out_rev = m(T(x[::-1].copy())).data
    swapped = np.concatenate([out_rev[:, 3:], out_rev[:, :3]], axis=1)[::-1]
    np.testing.assert_allclose(swapped, out, atol=1e-14)
