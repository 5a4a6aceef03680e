"""Waveform <-> compressed complex spectrogram conversions.

Spectrograms use a 2-channel (real, imaginary) layout of shape [2, F, T]
with F = n_fft // 2 + 1. Frames are centred by reflection padding of
n_fft // 2 on both sides, so T = len // hop + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import functional as fn
from .autograd import Tensor

SAMPLE_RATE = 8000
HEADROOM = 4.0


class COLAError(ValueError):
    """Window/hop pair cannot be inverted by weighted overlap-add."""


@dataclass(frozen=True)
class WindowSpec:
    n_fft: int = 256
    hop: int = 128
    window: str = "sqrt_hann"
    centered: bool = True

    @property
    def n_freq(self) -> int:
        return self.n_fft // 2 + 1

    def n_frames(self, length: int) -> int:
        return length // self.hop + 1

    def analysis_window(self) -> np.ndarray:
        return _window(self.window, self.n_fft)

    def check_cola(self) -> None:
        _check_cola(self.window, self.n_fft, self.hop)


@lru_cache(maxsize=None)
def _window(kind: str, n_fft: int) -> np.ndarray:
    if kind != "sqrt_hann":
        raise ValueError(f"unsupported window {kind!r}; only 'sqrt_hann' is implemented")
    n = np.arange(n_fft)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / n_fft)  # periodic
    w = np.sqrt(hann)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def _check_cola(kind: str, n_fft: int, hop: int) -> None:
    if hop < 1 or hop > n_fft:
        raise COLAError(f"hop {hop} must lie in [1, n_fft={n_fft}]")
    w2 = _window(kind, n_fft) ** 2
    acc = np.zeros(hop)
    for start in range(0, n_fft, hop):
        seg = w2[start:start + hop]
        acc[: seg.size] += seg
    if np.ptp(acc) > 1e-10 * max(acc.max(), 1e-300):
        raise COLAError(f"{kind} window with n_fft={n_fft}, hop={hop} violates constant overlap-add")


@lru_cache(maxsize=64)
def _envelope(kind: str, n_fft: int, hop: int, n_frames: int) -> np.ndarray:
    w2 = _window(kind, n_fft) ** 2
    total = n_fft + hop * (n_frames - 1)
    env = np.zeros(total)
    for t in range(n_frames):
        env[t * hop: t * hop + n_fft] += w2
    env[env < 1e-10] = 1.0  # positions no frame covers are cropped away anyway
    env.setflags(write=False)
    return env


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("waveform must be a non-empty 1-D sequence")
        if not np.isfinite(self.samples).all():
            raise ValueError("waveform contains non-finite samples")
        peak = np.abs(self.samples).max()
        if peak > HEADROOM:
            raise ValueError(f"waveform peak {peak:.3f} exceeds headroom {HEADROOM}")

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class ComplexSpectrogram:
    data: np.ndarray  # [2, F, T]
    window: WindowSpec = field(default_factory=WindowSpec)

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise ValueError(f"spectrogram must be [2, F, T], got {self.data.shape}")
        if self.data.shape[1] != self.window.n_freq:
            raise ValueError(f"F={self.data.shape[1]} does not match n_fft={self.window.n_fft}")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def complex(self) -> np.ndarray:
        return self.data[0] + 1j * self.data[1]


def _samples(w) -> np.ndarray:
    if isinstance(w, Waveform):
        return w.samples
    return np.asarray(w)


def stft(w, spec: WindowSpec = WindowSpec()) -> ComplexSpectrogram:
    """Centred short-time Fourier transform into a [2, F, T] real array."""
    x = _samples(w)
    if x.ndim != 1:
        raise ValueError("stft expects a 1-D waveform")
    if x.size < spec.hop:
        raise ValueError(f"waveform of {x.size} samples is shorter than hop {spec.hop}")
    pad = spec.n_fft // 2
    mode = "reflect" if x.size > pad else "symmetric"
    xp = np.pad(x.astype(np.float64), pad, mode=mode)
    T = spec.n_frames(x.size)
    frames = np.lib.stride_tricks.sliding_window_view(xp, spec.n_fft)[:: spec.hop][:T]
    Z = np.fft.rfft(frames * spec.analysis_window(), axis=-1).T  # [F, T]
    out = np.stack([Z.real, Z.imag]).astype(x.dtype if x.dtype == np.float32 else np.float64)
    return ComplexSpectrogram(out, spec)


def synthesis_envelope(spec: WindowSpec, n_frames: int) -> np.ndarray:
    spec.check_cola()
    return _envelope(spec.window, spec.n_fft, spec.hop, n_frames)


def istft_tensor(S: Tensor, spec: WindowSpec, out_len: int) -> Tensor:
    """Differentiable inverse STFT of a [..., 2, F, T] tensor."""
    if S.shape[-2] != spec.n_freq:
        raise ValueError(f"F={S.shape[-2]} does not match n_fft={spec.n_fft}")
    env = synthesis_envelope(spec, S.shape[-1])
    return fn.overlap_add_synthesis(S, spec.analysis_window(), spec.hop, out_len, env)


def istft(S: ComplexSpectrogram, out_len: int) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`, trimmed/padded to ``out_len``."""
    return istft_tensor(Tensor(S.data), S.window, out_len).data


def _compress_array(data: np.ndarray, exponent: float) -> np.ndarray:
    return fn.power_compress(Tensor(data), exponent, axis=0).data


def drc(S: ComplexSpectrogram, exponent: float = 0.5) -> ComplexSpectrogram:
    """Power-law magnitude compression |x| -> |x|**exponent, phase preserved."""
    if exponent <= 0:
        raise ValueError(f"DRC exponent must be positive, got {exponent}")
    return ComplexSpectrogram(_compress_array(S.data, exponent), S.window)


def idrc(S: ComplexSpectrogram, exponent: float = 0.5) -> ComplexSpectrogram:
    """Inverse of :func:`drc` for the same exponent."""
    if exponent <= 0:
        raise ValueError(f"DRC exponent must be positive, got {exponent}")
    return ComplexSpectrogram(_compress_array(S.data, 1.0 / exponent), S.window)


def compressed_spectrum(x, spec: WindowSpec = WindowSpec(), exponent: float = 0.5, dtype=np.float64) -> np.ndarray:
    """``drc(stft(x))`` as a plain [2, F, T] array in ``dtype``."""
    return drc(stft(np.asarray(x, dtype=np.float64), spec), exponent).data.astype(dtype)
