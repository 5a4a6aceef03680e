"""Mono RIFF/WAVE I/O. Reads 16-bit PCM or 32-bit float, writes 32-bit float."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import SAMPLE_RATE


class WavFormatError(ValueError):
    pass


def read_wav(path, expected_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Return samples as float64 in [-1, 1] for PCM16 (float files pass through)."""
    rate, data = wavfile.read(Path(path))
    if rate != expected_rate:
        raise WavFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.ndim != 1:
        raise WavFormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.float32:
        return data.astype(np.float64)
    raise WavFormatError(f"{path}: unsupported sample format {data.dtype}")


def write_wav(path, samples, rate: int = SAMPLE_RATE) -> None:
    x = np.asarray(samples, dtype=np.float32)
    if x.ndim != 1:
        raise WavFormatError("only mono audio can be written")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(Path(path), rate, x)
