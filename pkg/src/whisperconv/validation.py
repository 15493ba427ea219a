"""Input validation helpers shared by estimators and pipeline functions."""
import numpy as np


def check_mel_array(mel, n_mels=None):
    """Return a float64 ``[n_mels, n_frames]`` array from a MelSpectrogram or array-like."""
    values = np.asarray(getattr(mel, "values", mel), dtype=np.float64)
    if values.ndim != 2 or values.shape[1] < 1:
        raise ValueError(f"expected a [n_mels, n_frames] matrix, got shape {values.shape}")
    if n_mels is not None and values.shape[0] != n_mels:
        raise ValueError(f"expected {n_mels} mel bands, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise ValueError("mel features contain non-finite values")
    return values


def check_wave_array(wave):
    """Return a finite float64 1-D waveform from an AudioClip or array-like."""
    samples = np.asarray(getattr(wave, "samples", wave), dtype=np.float64)
    if samples.ndim != 1 or samples.size < 1:
        raise ValueError(f"expected a non-empty 1-D waveform, got shape {samples.shape}")
    if not np.all(np.isfinite(samples)):
        raise ValueError("waveform contains non-finite values")
    return samples


def check_paired(X, y):
    X, y = list(X), list(y)
    if len(X) != len(y):
        raise ValueError(f"X and y have different lengths ({len(X)} vs {len(y)})")
    if not X:
        raise ValueError("no training pairs given")
    return X, y
