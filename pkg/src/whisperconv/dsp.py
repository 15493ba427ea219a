"""Short-time Fourier analysis/synthesis and mel filterbanks (numpy)."""
import numpy as np


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels, fmin, fmax):
    """Return the ``n_mels + 2`` band edge frequencies in Hz (HTK mel scale)."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(sample_rate, n_fft, n_mels, fmin=0.0, fmax=None):
    """Triangular filters with unit peak, shape ``(n_mels, n_fft // 2 + 1)``."""
    if fmax is None:
        fmax = sample_rate / 2.0
    edges = mel_band_edges(n_mels, fmin, fmax)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def _window(win_length, n_fft):
    win = np.hanning(win_length + 1)[:-1]  # periodic Hann
    if win_length < n_fft:
        left = (n_fft - win_length) // 2
        win = np.pad(win, (left, n_fft - win_length - left))
    return win


def frame_count(n_samples, hop_length):
    """Frames produced by centered analysis of ``n_samples`` samples."""
    return n_samples // hop_length + 1


def stft(x, n_fft, hop_length, win_length=None, pad_mode="reflect"):
    """Centered STFT of a 1-D signal; returns complex ``(n_fft // 2 + 1, n_frames)``."""
    win_length = n_fft if win_length is None else win_length
    x = np.asarray(x, dtype=np.float64)
    padded = np.pad(x, (n_fft // 2, n_fft // 2), mode=pad_mode)
    n_frames = frame_count(x.size, hop_length)
    idx = np.arange(n_fft)[None, :] + hop_length * np.arange(n_frames)[:, None]
    frames = padded[idx] * _window(win_length, n_fft)[None, :]
    return np.fft.rfft(frames, axis=1).T


def istft(spec, hop_length, win_length=None, length=None):
    """Inverse of :func:`stft` by weighted overlap-add."""
    n_fft = 2 * (spec.shape[0] - 1)
    win_length = n_fft if win_length is None else win_length
    win = _window(win_length, n_fft)
    n_frames = spec.shape[1]
    frames = np.fft.irfft(spec.T, n=n_fft, axis=1) * win[None, :]
    total = n_fft + hop_length * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    for t in range(n_frames):
        s = t * hop_length
        out[s:s + n_fft] += frames[t]
        norm[s:s + n_fft] += win ** 2
    out /= np.where(norm > 1e-8, norm, 1.0)
    out = out[n_fft // 2:]
    if length is None:
        length = hop_length * (n_frames - 1)
    if out.size < length:
        out = np.pad(out, (0, length - out.size))
    return out[:length]
