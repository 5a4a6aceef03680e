"""Fused differentiable kernels used by the network layers.

Each function takes and returns :class:`~dcfnet.autograd.Tensor` objects and
registers a hand-written backward. Convolutions follow the cross-correlation
convention (no kernel flip). LSTM gates are ordered (input, forget, cell,
output).
"""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, _sigmoid, concat, matmul, swapaxes

# ---------------------------------------------------------------------------
# activations and normalisation


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (x,), _bw, "softmax")


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Parametric ReLU with a single learnable negative slope."""
    neg = x.data < 0
    a = slope.data.reshape(())
    out = np.where(neg, a * x.data, x.data)

    def _bw(g):
        gx = np.where(neg, a * g, g) if x.requires_grad else None
        gs = np.asarray((g * x.data * neg).sum()).reshape(slope.shape) if slope.requires_grad else None
        return gx, gs

    return Tensor._make(out, (x, slope), _bw, "prelu")


def rms_norm(x: Tensor, gain: Tensor, axis: int = -1, eps: float = 1e-8) -> Tensor:
    """Divide by the root-mean-square along ``axis`` and scale by ``gain``.

    ``gain`` has one entry per position of ``axis``.
    """
    axis = axis % x.ndim
    gshape = [1] * x.ndim
    gshape[axis] = x.shape[axis]
    gain_b = gain.data.reshape(gshape)
    rms = np.sqrt((x.data * x.data).mean(axis=axis, keepdims=True) + eps)
    xhat = x.data / rms
    out = xhat * gain_b

    def _bw(g):
        gx = gg = None
        if x.requires_grad:
            gh = g * gain_b
            gx = (gh - xhat * (gh * xhat).mean(axis=axis, keepdims=True)) / rms
        if gain.requires_grad:
            other = tuple(i for i in range(x.ndim) if i != axis)
            gg = (g * xhat).sum(axis=other).reshape(gain.shape)
        return gx, gg

    return Tensor._make(out, (x, gain), _bw, "rms_norm")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis; weight is [out, in]."""
    out = matmul(x, swapaxes(weight, 0, 1))
    return out + bias if bias is not None else out


# ---------------------------------------------------------------------------
# 2-D convolution


def _as_pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    return (int(v[0]), int(v[1]))


def _resolve_padding(padding, kernel, dilation, stride):
    if padding == "same":
        if stride != (1, 1):
            raise ValueError("'same' padding requires stride 1")
        pads = []
        for k, d in zip(kernel, dilation):
            total = d * (k - 1)
            pads.append((total // 2, total - total // 2))
        return tuple(pads)
    if padding == "valid":
        return ((0, 0), (0, 0))
    ph, pw = _as_pair(padding)
    return ((ph, ph), (pw, pw))


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride=1,
    dilation=1,
    padding="same",
    groups: int = 1,
) -> Tensor:
    """Grouped, dilated 2-D cross-correlation.

    Args:
        x: input of shape [C_in, H, W] or [B, C_in, H, W].
        weight: kernel of shape [C_out, C_in // groups, kh, kw].
        bias: optional [C_out].
        padding: "same", "valid", or an explicit int/pair of zero padding.
    """
    unbatched = x.ndim == 3
    if unbatched:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects [B,C,H,W] input and 4-D kernel, got {x.shape} and {weight.shape}")
    B, Ci, H, W = x.shape
    Co, Cig, kh, kw = weight.shape
    if groups < 1 or Ci % groups or Co % groups:
        raise ValueError(f"groups={groups} must divide in/out channels ({Ci}, {Co})")
    if Cig != Ci // groups:
        raise ValueError(f"kernel expects {Cig * groups} input channels, input has {Ci}")
    if bias is not None and bias.shape != (Co,):
        raise ValueError(f"bias shape {bias.shape} does not match {Co} output channels")
    sh, sw = _as_pair(stride)
    dh, dw = _as_pair(dilation)
    (pt, pb), (pl, pr) = _resolve_padding(padding, (kh, kw), (dh, dw), (sh, sw))
    Hp, Wp = H + pt + pb, W + pl + pr
    Ho = (Hp - dh * (kh - 1) - 1) // sh + 1
    Wo = (Wp - dw * (kw - 1) - 1) // sw + 1
    if Ho < 1 or Wo < 1:
        raise ValueError("kernel larger than padded input")
    G, Cog, K = groups, Co // groups, kh * kw

    xd = x.data
    if Cig == 1 and Cog == 1 and K > 1:
        return _depthwise(x, weight, bias, (pt, pb, pl, pr), (dh, dw), (sh, sw), (Ho, Wo), unbatched)
    pointwise = K == 1 and (sh, sw) == (1, 1) and (pt, pb, pl, pr) == (0, 0, 0, 0)
    if pointwise:
        cols = xd.reshape(B, G, Cig, H * W)
        slices = None
    else:
        xp = np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else xd
        slices = [
            (slice(i * dh, i * dh + sh * (Ho - 1) + 1, sh), slice(j * dw, j * dw + sw * (Wo - 1) + 1, sw))
            for i in range(kh)
            for j in range(kw)
        ]
        cols = np.stack([xp[:, :, a, b] for a, b in slices], axis=2)  # [B, Ci, K, Ho, Wo]
        cols = cols.reshape(B, G, Cig * K, Ho * Wo)
    wmat = weight.data.reshape(G, Cog, Cig * K)
    out = np.matmul(wmat, cols).reshape(B, Co, Ho, Wo)
    if bias is not None:
        out = out + bias.data.reshape(1, Co, 1, 1)

    def _bw(g):
        g4 = g.reshape(B, G, Cog, Ho * Wo)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.matmul(g4, np.swapaxes(cols, -1, -2)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gcols = np.matmul(np.swapaxes(wmat, -1, -2), g4)  # [B, G, Cig*K, P]
            if pointwise:
                gx = gcols.reshape(B, Ci, H, W)
            else:
                gcols = gcols.reshape(B, Ci, K, Ho, Wo)
                gxp = np.zeros((B, Ci, Hp, Wp), dtype=g.dtype)
                for k, (a, b) in enumerate(slices):
                    gxp[:, :, a, b] += gcols[:, :, k]
                gx = gxp[:, :, pt:pt + H, pl:pl + W]
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    res = Tensor._make(out, parents, _bw, "conv2d")
    return res.reshape(res.shape[1:]) if unbatched else res


def _depthwise(x, weight, bias, pads, dilation, stride, out_hw, unbatched):
    # one kernel per channel: shifted multiply-adds beat a batch of tiny matmuls
    B, C, H, W = x.shape
    _, _, kh, kw = weight.shape
    pt, pb, pl, pr = pads
    dh, dw = dilation
    sh, sw = stride
    Ho, Wo = out_hw
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if any(pads) else x.data
    slices = [
        (slice(i * dh, i * dh + sh * (Ho - 1) + 1, sh), slice(j * dw, j * dw + sw * (Wo - 1) + 1, sw))
        for i in range(kh)
        for j in range(kw)
    ]
    wk = weight.data.reshape(C, kh * kw)
    out = np.zeros((B, C, Ho, Wo), dtype=np.result_type(x.data, weight.data))
    for k, (a, b) in enumerate(slices):
        out += xp[:, :, a, b] * wk[:, k, None, None]
    if bias is not None:
        out += bias.data.reshape(1, C, 1, 1)

    def _bw(g):
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.stack([np.einsum("bchw,bchw->c", g, xp[:, :, a, b]) for a, b in slices], axis=1)
            gw = gw.reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for k, (a, b) in enumerate(slices):
                gxp[:, :, a, b] += g * wk[:, k, None, None]
            gx = gxp[:, :, pt:pt + H, pl:pl + W]
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    res = Tensor._make(out, parents, _bw, "depthwise_conv2d")
    return res.reshape(res.shape[1:]) if unbatched else res


# ---------------------------------------------------------------------------
# recurrent


def lstm(x: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor, reverse: bool = False) -> Tensor:
    """Single-direction LSTM over ``x`` of shape [N, L, d_in] with zero initial state.

    Returns the hidden sequence [N, L, H]. With ``reverse`` the recurrence
    runs from the last step to the first; outputs stay aligned with inputs.
    """
    N, L, _ = x.shape
    if L < 1:
        raise ValueError("LSTM needs a non-empty sequence")
    Hd = w_hh.shape[1]
    dt = x.dtype
    xw = np.matmul(x.data, w_ih.data.T) + bias.data  # [N, L, 4H]
    steps = range(L - 1, -1, -1) if reverse else range(L)
    gates = np.empty((N, L, 4 * Hd), dtype=dt)  # post-activation i, f, g, o
    cs = np.empty((N, L, Hd), dtype=dt)
    hs = np.empty((N, L, Hd), dtype=dt)
    h = np.zeros((N, Hd), dtype=dt)
    c = np.zeros((N, Hd), dtype=dt)
    whT = w_hh.data.T
    for t in steps:
        z = xw[:, t] + h @ whT
        a = gates[:, t]
        a[:, : 2 * Hd] = _sigmoid(z[:, : 2 * Hd])
        a[:, 2 * Hd: 3 * Hd] = np.tanh(z[:, 2 * Hd: 3 * Hd])
        a[:, 3 * Hd:] = _sigmoid(z[:, 3 * Hd:])
        c = a[:, Hd: 2 * Hd] * c + a[:, :Hd] * a[:, 2 * Hd: 3 * Hd]
        h = a[:, 3 * Hd:] * np.tanh(c)
        cs[:, t] = c
        hs[:, t] = h

    def _bw(gh_seq):
        dz_all = np.empty((N, L, 4 * Hd), dtype=dt)
        dh = np.zeros((N, Hd), dtype=dt)
        dc = np.zeros((N, Hd), dtype=dt)
        w_hh_d = w_hh.data
        order = range(L) if reverse else range(L - 1, -1, -1)
        for t in order:
            a = gates[:, t]
            i, f, gg, o = a[:, :Hd], a[:, Hd: 2 * Hd], a[:, 2 * Hd: 3 * Hd], a[:, 3 * Hd:]
            prev = t + 1 if reverse else t - 1
            c_prev = cs[:, prev] if 0 <= prev < L else np.zeros((N, Hd), dtype=dt)
            tc = np.tanh(cs[:, t])
            dh = dh + gh_seq[:, t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            dz = dz_all[:, t]
            dz[:, :Hd] = dc * gg * i * (1.0 - i)
            dz[:, Hd: 2 * Hd] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * Hd: 3 * Hd] = dc * i * (1.0 - gg * gg)
            dz[:, 3 * Hd:] = do * o * (1.0 - o)
            dc = dc * f
            dh = dz @ w_hh_d
        gx = np.matmul(dz_all, w_ih.data) if x.requires_grad else None
        gwi = np.tensordot(dz_all, x.data, axes=([0, 1], [0, 1])) if w_ih.requires_grad else None
        gb = dz_all.sum(axis=(0, 1)) if bias.requires_grad else None
        gwh = None
        if w_hh.requires_grad:
            h_prev = np.zeros_like(hs)
            if reverse:
                h_prev[:, :-1] = hs[:, 1:]
            else:
                h_prev[:, 1:] = hs[:, :-1]
            gwh = np.tensordot(dz_all, h_prev, axes=([0, 1], [0, 1]))
        return gx, gwi, gwh, gb

    return Tensor._make(hs, (x, w_ih, w_hh, bias), _bw, "lstm")


def blstm(x: Tensor, fwd: tuple[Tensor, Tensor, Tensor], bwd: tuple[Tensor, Tensor, Tensor]) -> Tensor:
    """Bidirectional LSTM: forward and backward hidden sequences concatenated per step."""
    return concat([lstm(x, *fwd), lstm(x, *bwd, reverse=True)], axis=-1)


# ---------------------------------------------------------------------------
# spectral


def power_compress(spec: Tensor, exponent: float, axis: int = -3) -> Tensor:
    """Raise the magnitude of a (real, imag) pair to ``exponent``, keeping phase.

    The real/imaginary pair lives on ``axis`` (extent 2). Zero bins stay zero
    and get zero gradient.
    """
    if exponent <= 0:
        raise ValueError(f"compression exponent must be positive, got {exponent}")
    axis = axis % spec.ndim
    if spec.shape[axis] != 2:
        raise ValueError(f"axis {axis} must hold (real, imag), got extent {spec.shape[axis]}")
    re = np.take(spec.data, 0, axis=axis)
    im = np.take(spec.data, 1, axis=axis)
    mag2 = re * re + im * im
    nz = mag2 > 0
    safe = np.where(nz, mag2, 1.0)
    half = 0.5 * (exponent - 1.0)
    scale = np.where(nz, safe ** half, 1.0 if exponent == 1 else 0.0)
    out = np.stack([re * scale, im * scale], axis=axis)

    def _bw(g):
        gre = np.take(g, 0, axis=axis)
        gim = np.take(g, 1, axis=axis)
        # d scale / d re = 2 * half * mag2**(half-1) * re
        ds = np.where(nz, 2.0 * half * safe ** (half - 1.0), 0.0)
        proj = (gre * re + gim * im) * ds
        return (np.stack([gre * scale + proj * re, gim * scale + proj * im], axis=axis),)

    return Tensor._make(out, (spec,), _bw, "power_compress")


def overlap_add_synthesis(spec: Tensor, window: np.ndarray, hop: int, out_len: int, norm: np.ndarray) -> Tensor:
    """Differentiable inverse STFT core: per-frame irfft, window, overlap-add.

    ``spec`` is [..., 2, F, T]. ``norm`` is the squared-window envelope over
    the padded signal and ``out_len`` counts samples after removing the
    centring pad of n_fft // 2 on both sides.
    """
    n_fft = window.shape[0]
    F, T = spec.shape[-2], spec.shape[-1]
    lead = spec.shape[:-3]
    z = spec.data[..., 0, :, :] + 1j * spec.data[..., 1, :, :]
    frames = np.fft.irfft(z, n=n_fft, axis=-2)  # [..., n_fft, T]
    frames = frames * window[:, None]
    pad = n_fft // 2
    total = n_fft + hop * (T - 1)
    idx = np.arange(n_fft)[:, None] + hop * np.arange(T)[None, :]
    y = np.zeros(lead + (total,), dtype=np.float64)
    flat_y = y.reshape(-1, total)
    flat_f = frames.reshape(-1, n_fft * T)
    for r in range(flat_y.shape[0]):
        flat_y[r] = np.bincount(idx.ravel(), weights=flat_f[r], minlength=total)
    y = y / norm
    y = _fit_length(y[..., pad:], out_len)
    dt = spec.dtype
    coef = np.full(F, 2.0)
    coef[0] = 1.0
    if n_fft % 2 == 0:
        coef[-1] = 1.0
    coef = coef / n_fft

    def _bw(g):
        gy = np.zeros(lead + (total,), dtype=np.float64)
        usable = min(out_len, total - pad)
        gy[..., pad:pad + usable] = g[..., :usable]
        gy = gy / norm
        gframes = gy[..., idx] * window[:, None]  # [..., n_fft, T]
        G = np.fft.rfft(gframes, axis=-2) * coef[:, None]
        return (np.stack([G.real, G.imag], axis=-3).astype(dt),)

    return Tensor._make(y.astype(dt), (spec,), _bw, "istft")


def _fit_length(y: np.ndarray, n: int) -> np.ndarray:
    if y.shape[-1] >= n:
        return y[..., :n]
    padw = [(0, 0)] * (y.ndim - 1) + [(0, n - y.shape[-1])]
    return np.pad(y, padw)
