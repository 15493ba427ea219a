"""Objective evaluation: F0 RMSE, F0 correlation and mel-cepstral distortion.

F0 comes from a YIN-style difference-function tracker and cepstra from a
DCT of the log-mel spectrum, both at a 10 ms frame shift.  Absolute values
are therefore not comparable with numbers computed by other vocoder
toolchains; rankings between systems are.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .alignment import dtw
from .audio import AudioClip
from .preprocess import StftConfig, mel_from_samples, resample

METRIC_RATE = 22050
MCD_SCALE = 10.0 / math.log(10.0)


@dataclass(frozen=True, eq=False)
class F0Track:
    """Per-frame F0 in Hz (0 = unvoiced)."""

    f0: np.ndarray
    frame_shift: float

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=np.float64)
        if f0.ndim != 1 or np.any(f0 < 0):
            raise ValueError("F0 track must be 1-D and non-negative")
        object.__setattr__(self, "f0", f0)

    def __len__(self):
        return self.f0.size

    @property
    def voiced(self):
        return self.f0 > 0

    @property
    def voiced_fraction(self):
        return float(self.voiced.mean()) if self.f0.size else 0.0


@dataclass(frozen=True, eq=False)
class CepstraTrack:
    """Mel-cepstral coefficients ``c_0 .. c_D`` per frame, shape ``[n_frames, D + 1]``."""

    coeffs: np.ndarray
    frame_shift: float

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1 or not np.all(np.isfinite(c)):
            raise ValueError("cepstra must be a finite [n_frames>=1, order+1] matrix")
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return self.coeffs.shape[0]


@dataclass
class MetricsReport:
    rmse: float
    corr: float
    mcd_mean: float
    mcd_std: float
    n_utterances: int
    rmse_all_frames: float = float("nan")

    def to_dict(self):
        return asdict(self)


def _at_metric_rate(clip):
    return resample(clip, METRIC_RATE) if clip.sample_rate != METRIC_RATE else clip


def _hop(sample_rate, frame_shift):
    return int(round(frame_shift * sample_rate))


def extract_f0(clip: AudioClip, f0_min=50.0, f0_max=600.0, threshold=0.15,
               frame_shift=0.01, window=1024, silence_db=-40.0) -> F0Track:
    """YIN-style F0 track with centered frames every ``frame_shift`` seconds.

    Returns ``1 + len // hop`` frames, or an empty track for clips shorter
    than one analysis frame.  Frames whose cumulative-mean-normalized
    difference never drops below ``threshold`` inside the search band, or
    whose energy is ``silence_db`` below the loudest frame, are unvoiced.
    """
    sr = clip.sample_rate
    hop = _hop(sr, frame_shift)
    tau_min = max(2, int(math.floor(sr / f0_max)))
    tau_max = int(math.ceil(sr / f0_min))
    n = window + tau_max + 1
    x = clip.samples
    if x.size < n:
        return F0Track(np.zeros(0), hop / sr)
    n_frames = 1 + x.size // hop
    padded = np.pad(x, (n // 2, n))
    idx = np.arange(n)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = padded[idx]

    nfft = 1 << int(math.ceil(math.log2(n + window)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    head = np.fft.rfft(frames[:, :window], nfft, axis=1)
    corr = np.fft.irfft(np.conj(head) * spec, nfft, axis=1)[:, :tau_max + 1]
    cum = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    taus = np.arange(tau_max + 1)
    energy_lag = cum[:, taus + window] - cum[:, taus]
    diff = np.maximum(energy_lag[:, :1] + energy_lag - 2.0 * corr, 0.0)
    cmndf = np.ones_like(diff)
    running = np.cumsum(diff[:, 1:], axis=1)
    cmndf[:, 1:] = diff[:, 1:] * taus[1:] / np.where(running > 0, running, np.inf)

    frame_energy = energy_lag[:, 0]
    loud = frame_energy > max(frame_energy.max() * 10 ** (silence_db / 10), 1e-10)

    f0 = np.zeros(n_frames)
    for k in np.flatnonzero(loud):
        d = cmndf[k]
        below = np.flatnonzero(d[tau_min:tau_max] < threshold)
        if below.size == 0:
            continue
        tau = tau_min + below[0]
        while tau + 1 < tau_max and d[tau + 1] < d[tau]:
            tau += 1
        a, b, c = d[tau - 1], d[tau], d[tau + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom > 0 else 0.0
        freq = sr / (tau + float(np.clip(shift, -1.0, 1.0)))
        if f0_min <= freq <= f0_max:
            f0[k] = freq
    return F0Track(f0, hop / sr)


def extract_mel_cepstra(clip: AudioClip, order=24, frame_shift=0.01, n_mels=80) -> CepstraTrack:
    """DCT-II (orthonormal) of the natural-log mel spectrum, coefficients 0..order."""
    sr = clip.sample_rate
    cfg = StftConfig(hop_length=_hop(sr, frame_shift), sample_rate=sr, n_mels=n_mels,
                     fmax=sr / 2.0)
    log_mel = mel_from_samples(clip.samples, cfg)
    ceps = dct(log_mel, type=2, norm="ortho", axis=0)[:order + 1]
    return CepstraTrack(ceps.T, cfg.hop_length / sr)


def mcd_per_frame(conv, norm):
    """Frame-wise distortion in dB; inputs are aligned ``[n, D + 1]`` arrays, ``c_0`` ignored."""
    d = np.asarray(conv, dtype=np.float64)[:, 1:] - np.asarray(norm, dtype=np.float64)[:, 1:]
    return MCD_SCALE * np.sqrt(2.0 * np.sum(d * d, axis=1))


def cepstral_path(conv: CepstraTrack, norm: CepstraTrack):
    """DTW path between two cepstra tracks (energy coefficient excluded)."""
    return dtw(conv.coeffs[:, 1:].T, norm.coeffs[:, 1:].T)


def mcd(conv: CepstraTrack, norm: CepstraTrack, align=True, path=None):
    """Mean and standard deviation of the frame-wise MCD over aligned frames."""
    a, b = np.asarray(conv.coeffs), np.asarray(norm.coeffs)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty cepstra track")
    if path is None and align:
        path = cepstral_path(conv, norm)
    if path is not None:
        pairs = path.pairs
        a, b = a[pairs[:, 0]], b[pairs[:, 1]]
    else:
        n = min(a.shape[0], b.shape[0])
        a, b = a[:n], b[:n]
    per_frame = mcd_per_frame(a, b)
    return float(per_frame.mean()), float(per_frame.std())


def _aligned_f0(conv: F0Track, norm: F0Track, path=None):
    a, b = conv.f0, norm.f0
    if path is not None:
        pairs = path.pairs
        ok = (pairs[:, 0] < a.size) & (pairs[:, 1] < b.size)
        pairs = pairs[ok]
        return a[pairs[:, 0]], b[pairs[:, 1]]
    n = min(a.size, b.size)
    return a[:n], b[:n]


def rmse_f0(conv: F0Track, norm: F0Track, path=None, frames="voiced"):
    """F0 RMSE in Hz over co-voiced frames (``frames="voiced"``) or all aligned frames.

    Returns NaN when no frame qualifies.
    """
    a, b = _aligned_f0(conv, norm, path)
    if frames == "voiced":
        keep = (a > 0) & (b > 0)
    elif frames == "all":
        keep = np.ones(a.size, dtype=bool)
    else:
        raise ValueError("frames must be 'voiced' or 'all'")
    if not keep.any():
        return float("nan")
    return float(np.sqrt(np.mean((a[keep] - b[keep]) ** 2)))


def pearson_corr_f0(conv: F0Track, norm: F0Track, path=None, frames="voiced"):
    """Pearson correlation of aligned F0 values; NaN if undefined."""
    a, b = _aligned_f0(conv, norm, path)
    if frames == "voiced":
        keep = (a > 0) & (b > 0)
        a, b = a[keep], b[keep]
    if a.size < 2:
        return float("nan")
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0.0:
        return float("nan")
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


def evaluate_utterance(converted: AudioClip, normal: AudioClip, utt_id=""):
    """All metrics for one converted/normal pair, aligned by DTW on cepstra."""
    converted, normal = _at_metric_rate(converted), _at_metric_rate(normal)
    cep_c, cep_n = extract_mel_cepstra(converted), extract_mel_cepstra(normal)
    path = cepstral_path(cep_c, cep_n)
    f0_c, f0_n = extract_f0(converted), extract_f0(normal)
    mcd_mean, mcd_std = mcd(cep_c, cep_n, path=path)
    return {
        "utt_id": utt_id,
        "rmse": rmse_f0(f0_c, f0_n, path),
        "rmse_all_frames": rmse_f0(f0_c, f0_n, path, frames="all"),
        "corr": pearson_corr_f0(f0_c, f0_n, path),
        "mcd_mean": mcd_mean,
        "mcd_std": mcd_std,
        "n_frames": len(path),
        "voiced_fraction_converted": f0_c.voiced_fraction,
        "voiced_fraction_normal": f0_n.voiced_fraction,
    }


def _nanmean(values):
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else float("nan")


def aggregate(rows) -> MetricsReport:
    """Table-style summary: means over utterances; MCD std is across utterance means."""
    mcds = np.array([r["mcd_mean"] for r in rows], dtype=np.float64)
    return MetricsReport(
        rmse=_nanmean([r["rmse"] for r in rows]),
        corr=_nanmean([r["corr"] for r in rows]),
        mcd_mean=float(mcds.mean()) if mcds.size else float("nan"),
        mcd_std=float(mcds.std()) if mcds.size else float("nan"),
        n_utterances=len(rows),
        rmse_all_frames=_nanmean([r["rmse_all_frames"] for r in rows]),
    )


def evaluate_testset(pairs):
    """``pairs`` yields ``(utt_id, converted_clip, normal_clip)``; returns ``(rows, report)``."""
    rows = [evaluate_utterance(conv, norm, utt) for utt, conv, norm in pairs]
    return rows, aggregate(rows)


def write_report(rows, report: MetricsReport, outdir):
    """Write ``report.csv`` (one row per utterance) and ``report.json`` (aggregate)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fields = list(rows[0].keys()) if rows else ["utt_id"]
    with open(outdir / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    payload = {
        "RMSE": report.rmse,
        "Corr": report.corr,
        "MCD mean": report.mcd_mean,
        "MCD std": report.mcd_std,
        "RMSE all frames": report.rmse_all_frames,
        "n_utterances": report.n_utterances,
    }
    with open(outdir / "report.json", "w") as fh:
        json.dump({k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                   for k, v in payload.items()}, fh, indent=2)
    return outdir / "report.csv", outdir / "report.json"
