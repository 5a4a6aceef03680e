"""Full extraction network: mixture + enrollment waveforms in, target waveform out."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, no_grad
from .config import ModelConfig
from .decoder import Decoder, apply_mask
from .dsfb import DSFB, fuse_streams
from .dsp import WindowSpec, compressed_spectrum
from .encoder import Encoder
from .extractor import Extractor
from .nn import Conv2d, Module


class DCFNet(Module):
    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        rng = np.random.default_rng(seed)
        c = config
        self.encoder = Encoder(c.C, c.n_freq, c.d_attn, c.attn_reduce, c.dilations, rng, dtype)
        self.dsfb = [DSFB(c.C, c.se_reduction, rng, dtype) for _ in range(c.O)]
        self.fuse = Conv2d(2 * c.C, c.D, 1, rng, dtype)
        self.extractor = Extractor(c.D, c.N, c.heads, c.hidden, c.extractor, rng, dtype)
        self.decoder = Decoder(c.C, c.D, rng, dtype)
        self._config = c
        self._window = WindowSpec(c.n_fft, c.hop)
        self._dtype = np.dtype(dtype)

    @property
    def config(self) -> ModelConfig:
        return self._config

    @property
    def window(self) -> WindowSpec:
        return self._window

    @property
    def dtype(self):
        return self._dtype

    def spectra(self, waves) -> Tensor:
        """Batch of equal-length waveforms [B, L] -> compressed spectra [B, 2, F, T]."""
        waves = np.atleast_2d(np.asarray(waves, dtype=np.float64))
        return Tensor(np.stack([
            compressed_spectrum(w, self._window, self._config.drc_exponent, self._dtype) for w in waves
        ]))

    def forward(self, mixture, enrollment, return_parts: bool = False):
        """Waveform batches [B, L] and [B, L1] -> estimated target [B, L]."""
        mixture = np.atleast_2d(np.asarray(mixture, dtype=np.float64))
        enrollment = np.atleast_2d(np.asarray(enrollment, dtype=np.float64))
        Y_bar, E_bar = self.encoder(self.spectra(mixture), self.spectra(enrollment))
        fused = fuse_streams(Y_bar, E_bar, self.dsfb, self.fuse)
        mask = self.extractor(fused)
        H = apply_mask(self.decoder.embed(Y_bar), mask)
        est = self.decoder.reconstruct(H, self._window, self._config.drc_exponent, mixture.shape[-1])
        if return_parts:
            return est, dict(Y_bar=Y_bar, E_bar=E_bar, fused=fused, mask=mask, H=H)
        return est

    def separate(self, mixture, enrollment) -> np.ndarray:
        """Inference on a single item; returns a float64 waveform."""
        with no_grad():
            est = self.forward(mixture[None], enrollment[None])
        return est.data[0].astype(np.float64)

    def load_state(self, state: dict) -> None:
        """Copy arrays from ``{name: ndarray}`` into the parameters (shapes must match)."""
        params = self.parameters()
        mismatched = [f"{name}: checkpoint {np.shape(state[name])}, model {p.shape}"
                      for name, p in params.items() if name in state and np.shape(state[name]) != p.shape]
        if mismatched:
            raise ValueError(f"shape mismatch for {len(mismatched)} parameters, e.g. {mismatched[:3]}")
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise KeyError(f"state lacks {missing[:5]} / has unexpected {unexpected[:5]}")
        for name, p in params.items():
            p.data = np.asarray(state[name], dtype=p.dtype).copy()
