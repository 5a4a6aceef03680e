import numpy as np
import pytest

from dcfnet.autograd import Tensor
from dcfnet.decoder import Decoder, apply_mask
from dcfnet.dsp import WindowSpec, drc, stft


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64))


def test_mask_annihilation_and_identity(rng):
    emb = T(rng.standard_normal((1, 4, 5, 6)))
    assert not np.any(apply_mask(emb, T(np.zeros((1, 4, 5, 6)))).data)
    np.testing.assert_array_equal(apply_mask(emb, T(np.ones((1, 4, 5, 6)))).data, emb.data)
    with pytest.raises(ValueError):
        apply_mask(emb, T(np.ones((1, 4, 5, 5))))


def test_zero_features_give_zero_waveform(rng):
    dec = Decoder(4, 6, rng)
    out = dec.reconstruct(T(np.zeros((1, 6, 129, 63))), WindowSpec(), 0.5, 8000)
    assert out.shape == (1, 8000) and not np.any(out.data)


def test_oracle_closure(rng):
    """Feeding drc(stft(s)) straight through idrc + istft recovers s."""
    s = rng.uniform(-0.5, 0.5, 8000)
    dec = Decoder(4, 2, rng)
    dec.out_conv.weight.data = np.eye(2).reshape(2, 2, 1, 1)
    H = T(drc(stft(s), 0.5).data[None])
    out = dec.reconstruct(H, WindowSpec(), 0.5, 8000).data[0]
    assert np.linalg.norm(out - s) / np.linalg.norm(s) < 1e-10


def test_frame_count_mismatch(rng):
    dec = Decoder(4, 2, rng)
    with pytest.raises(ValueError):
        dec.reconstruct(T(np.zeros((1, 2, 129, 10))), WindowSpec(), 0.5, 8000)
