"""Signal carriers and file formats (WAV, binary mel matrices)."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

MEL_MAGIC = b"WCML"
_MEL_HEADER = struct.Struct("<4sIIII")


class AudioFormatError(ValueError):
    """Raised when a file cannot be decoded as mono audio or a mel matrix."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono waveform in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"AudioClip must be mono, got shape {samples.shape}")
        if samples.size < 1:
            raise ValueError("AudioClip needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples) -> "AudioClip":
        return AudioClip(samples, self.sample_rate)


def read_wav(path) -> AudioClip:
    """Read a mono WAV file (16/32-bit PCM or float) into an AudioClip."""
    try:
        sr, data = wavfile.read(str(path))
    except (ValueError, OSError, EOFError) as exc:
        raise AudioFormatError(f"cannot read {path}: {exc}") from exc
    if data.ndim == 2:
        if data.shape[1] != 1:
            raise AudioFormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
        data = data[:, 0]
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample type {data.dtype}")
    if samples.size == 0:
        raise AudioFormatError(f"{path}: empty audio")
    return AudioClip(samples, sr)


def write_wav(path, clip: AudioClip, subtype: str = "float32") -> None:
    """Write ``clip`` as mono WAV; ``subtype`` is ``"float32"`` or ``"pcm16"``."""
    x = np.clip(clip.samples, -1.0, 1.0)
    if subtype == "float32":
        data = x.astype(np.float32)
    elif subtype == "pcm16":
        data = np.round(x * 32767.0).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV subtype {subtype!r}")
    wavfile.write(str(path), clip.sample_rate, data)


def write_mel_file(path, values: np.ndarray, hop_length: int, sample_rate: int) -> None:
    """Little-endian float32 matrix with a (magic, n_mels, n_frames, hop, sr) header."""
    values = np.asarray(values, dtype="<f4")
    n_mels, n_frames = values.shape
    with open(path, "wb") as fh:
        fh.write(_MEL_HEADER.pack(MEL_MAGIC, n_mels, n_frames, hop_length, sample_rate))
        fh.write(np.ascontiguousarray(values).tobytes())


def read_mel_file(path):
    """Return ``(values, hop_length, sample_rate)`` from a binary mel file."""
    raw = Path(path).read_bytes()
    if len(raw) < _MEL_HEADER.size:
        raise AudioFormatError(f"{path}: truncated mel header")
    magic, n_mels, n_frames, hop, sr = _MEL_HEADER.unpack_from(raw)
    if magic != MEL_MAGIC:
        raise AudioFormatError(f"{path}: bad magic {magic!r}")
    body = raw[_MEL_HEADER.size:]
    if len(body) != 4 * n_mels * n_frames:
        raise AudioFormatError(f"{path}: expected {n_mels}x{n_frames} floats")
    values = np.frombuffer(body, dtype="<f4").reshape(n_mels, n_frames).astype(np.float64)
    return values, hop, sr
