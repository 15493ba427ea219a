"""Pluggable mel-to-waveform vocoders.

Any object with ``__call__(log_mel: ndarray[n_mels, T]) -> ndarray[hop * T]``
works as a vocoder.  :class:`GriffinLimVocoder` needs no external assets;
:class:`TorchScriptVocoder` wraps a pretrained scripted model such as WaveGlow.
"""
from __future__ import annotations

from typing import Protocol

import numpy as np

from . import dsp
from .preprocess import StftConfig


class Vocoder(Protocol):
    config: StftConfig

    def __call__(self, log_mel: np.ndarray) -> np.ndarray: ...


def _fit_length(wave, n):
    if wave.size < n:
        return np.pad(wave, (0, n - wave.size))
    return wave[:n]


class GriffinLimVocoder:
    """Pseudo-inverse of the mel filterbank followed by iterative phase reconstruction."""

    def __init__(self, config: StftConfig = StftConfig(), n_iter: int = 32, momentum: float = 0.99, seed: int = 0):
        self.config = config
        self.n_iter = n_iter
        self.momentum = momentum
        self.seed = seed
        self._pinv = np.linalg.pinv(config.filterbank())

    def mel_to_magnitude(self, log_mel):
        mel = np.exp(np.asarray(log_mel, dtype=np.float64))
        mag = np.maximum(self._pinv @ mel, 0.0)
        return mag

    def __call__(self, log_mel):
        c = self.config
        mag = self.mel_to_magnitude(log_mel)
        n_frames = mag.shape[1]
        length = c.hop_length * n_frames
        rng = np.random.default_rng(self.seed)
        angles = np.exp(2j * np.pi * rng.random(mag.shape))
        prev = np.zeros_like(angles)
        for _ in range(self.n_iter):
            wave = dsp.istft(mag * angles, c.hop_length, c.win_length, length=length)
            rebuilt = dsp.stft(wave, c.fft_size, c.hop_length, c.win_length)[:, :n_frames]
            if rebuilt.shape[1] < n_frames:
                rebuilt = np.pad(rebuilt, ((0, 0), (0, n_frames - rebuilt.shape[1])))
            accel = rebuilt - (self.momentum / (1 + self.momentum)) * prev
            prev = rebuilt
            angles = accel / np.maximum(np.abs(accel), 1e-16)
        wave = dsp.istft(mag * angles, c.hop_length, c.win_length, length=length)
        return np.clip(_fit_length(wave, length), -1.0, 1.0)


class TorchScriptVocoder:
    """Pretrained scripted vocoder loaded from a local file (``[1, n_mels, T] -> [1, samples]``)."""

    def __init__(self, path, config: StftConfig = StftConfig(), device="cpu"):
        import torch

        self.config = config
        self.device = device
        self.model = torch.jit.load(str(path), map_location=device).eval()

    def __call__(self, log_mel):
        import torch

        with torch.no_grad():
            mel = torch.as_tensor(np.asarray(log_mel, dtype=np.float32))[None].to(self.device)
            wave = self.model(mel).reshape(-1).cpu().numpy().astype(np.float64)
        return np.clip(_fit_length(wave, self.config.hop_length * mel.shape[-1]), -1.0, 1.0)
