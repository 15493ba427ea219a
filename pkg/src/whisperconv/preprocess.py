"""Volume normalization, silence trimming, resampling and log-mel features."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from math import gcd

import numpy as np
from scipy.signal import resample_poly
from sklearn.base import BaseEstimator, TransformerMixin

from . import dsp
from .audio import AudioClip


class AllSilenceWarning(UserWarning):
    """No speech frames were found; the clip was reduced to a single frame."""


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters shared by feature extraction and every model."""

    win_length: int = 1024
    hop_length: int = 256
    n_mels: int = 80
    sample_rate: int = 22050
    fft_size: int = 1024
    fmin: float = 0.0
    fmax: float = 11025.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if not 0 < self.hop_length <= self.win_length <= self.fft_size:
            raise ValueError("need 0 < hop_length <= win_length <= fft_size")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ValueError("need 0 <= fmin < fmax <= sample_rate / 2")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def to_dict(self):
        return asdict(self)

    def filterbank(self):
        return _cached_filterbank(self.sample_rate, self.fft_size, self.n_mels, self.fmin, self.fmax)


_FB_CACHE = {}


def _cached_filterbank(sr, n_fft, n_mels, fmin, fmax):
    key = (sr, n_fft, n_mels, fmin, fmax)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = dsp.mel_filterbank(sr, n_fft, n_mels, fmin, fmax)
    return _FB_CACHE[key]


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    """Natural-log amplitude mel matrix ``[n_mels, n_frames]``."""

    values: np.ndarray
    config: StftConfig

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] < 1:
            raise ValueError(f"mel values must be [n_mels, n_frames>=1], got {values.shape}")
        if values.shape[0] != self.config.n_mels:
            raise ValueError(f"expected {self.config.n_mels} mel bands, got {values.shape[0]}")
        object.__setattr__(self, "values", values)

    @property
    def n_mels(self):
        return self.values.shape[0]

    @property
    def n_frames(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class VadConfig:
    """Frame-energy voice activity detector settings."""

    frame_ms: float = 25.0
    shift_ms: float = 10.0
    threshold_db: float = 6.0
    hangover_ms: float = 200.0
    noise_percentile: float = 5.0
    energy_floor_db: float = -100.0


def normalize_volume(clip: AudioClip, target_peak: float = 0.95) -> AudioClip:
    """Scale so that the absolute peak equals ``target_peak``; silence is returned as is."""
    if not 0.0 < target_peak <= 1.0:
        raise ValueError(f"target_peak must lie in (0, 1], got {target_peak}")
    peak = np.max(np.abs(clip.samples))
    if peak == 0.0:
        return clip
    return clip.with_samples(clip.samples * (target_peak / peak))


def frame_energies_db(samples, frame_len, shift, floor_db=-100.0):
    """Mean-square energy in dB for frames starting every ``shift`` samples."""
    n = samples.size
    n_frames = max(1, 1 + (n - frame_len) // shift) if n >= frame_len else 1
    idx = np.arange(frame_len)[None, :] + shift * np.arange(n_frames)[:, None]
    padded = np.pad(samples, (0, max(0, idx.max() + 1 - n)))
    power = np.mean(padded[idx] ** 2, axis=1)
    return np.maximum(10.0 * np.log10(np.maximum(power, 1e-30)), floor_db)


def speech_frames(clip: AudioClip, vad: VadConfig = VadConfig()):
    """Boolean speech decision per VAD frame, plus the frame geometry in samples."""
    frame_len = max(1, int(round(vad.frame_ms * 1e-3 * clip.sample_rate)))
    shift = max(1, int(round(vad.shift_ms * 1e-3 * clip.sample_rate)))
    energy = frame_energies_db(clip.samples, frame_len, shift, vad.energy_floor_db)
    floor = np.percentile(energy, vad.noise_percentile)
    # a clip with little dynamic range has no detectable silence at all
    threshold = min(floor + vad.threshold_db, energy.max() - vad.threshold_db)
    active = (energy > threshold) & (energy > vad.energy_floor_db)
    hang = int(round(vad.hangover_ms / vad.shift_ms))
    if hang > 0 and active.any():
        held = active.copy()
        for k in np.flatnonzero(active):
            held[k:k + hang + 1] = True
        active = held
    return active, frame_len, shift


def trim_silence(clip: AudioClip, vad: VadConfig = VadConfig()) -> AudioClip:
    """Drop leading/trailing non-speech frames; the interior is left untouched.

    If no frame is classified as speech an :class:`AllSilenceWarning` is
    emitted and the first analysis frame is returned.
    """
    active, frame_len, shift = speech_frames(clip, vad)
    if not active.any():
        warnings.warn("no speech frames found", AllSilenceWarning, stacklevel=2)
        return clip.with_samples(clip.samples[:frame_len])
    speech = np.flatnonzero(active)
    first, last = speech[0], speech[-1]
    if first == 0 and last == active.size - 1:
        return clip
    start = first * shift
    stop = len(clip) if last == active.size - 1 else min(len(clip), last * shift + frame_len)
    return clip.with_samples(clip.samples[start:stop])


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling to ``target_rate``."""
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    g = gcd(target_rate, clip.sample_rate)
    up, down = target_rate // g, clip.sample_rate // g
    if len(clip) == 1:
        return AudioClip(np.repeat(clip.samples, max(1, round(up / down))), target_rate)
    y = resample_poly(clip.samples, up, down)
    return AudioClip(np.clip(y, -1.0, 1.0), target_rate)


def mel_spectrogram(clip: AudioClip, config: StftConfig = StftConfig()) -> MelSpectrogram:
    """Log-amplitude mel spectrogram with centered reflect padding.

    The frame count is ``len(clip) // hop_length + 1``.
    """
    if clip.sample_rate != config.sample_rate:
        raise ValueError(
            f"clip sample rate {clip.sample_rate} != feature sample rate {config.sample_rate}"
        )
    return MelSpectrogram(mel_from_samples(clip.samples, config), config)


def mel_from_samples(samples, config: StftConfig):
    mag = np.abs(dsp.stft(samples, config.fft_size, config.hop_length, config.win_length))
    mel = config.filterbank() @ mag
    return np.log(np.maximum(mel, config.log_floor))


class AudioPreprocessor(TransformerMixin, BaseEstimator):
    """Resample, peak-normalize and (optionally) trim a batch of clips."""

    def __init__(self, sample_rate=22050, target_peak=0.95, trim=True, vad=None):
        self.sample_rate = sample_rate
        self.target_peak = target_peak
        self.trim = trim
        self.vad = vad

    def fit(self, X=None, y=None):
        return self

    def transform_one(self, clip):
        clip = normalize_volume(resample(clip, self.sample_rate), self.target_peak)
        if self.trim:
            clip = trim_silence(clip, self.vad or VadConfig())
        return clip

    def transform(self, X):
        return [self.transform_one(c) for c in X]


class MelSpectrogramTransformer(TransformerMixin, BaseEstimator):
    """Batch wrapper around :func:`mel_spectrogram`."""

    def __init__(self, config=None):
        self.config = config

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        cfg = self.config or StftConfig()
        return [mel_spectrogram(c, cfg) for c in X]
