"""Paired whispered/normal corpora: manifest ingestion, speaker splits, synthetic fixtures."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .audio import AudioClip, AudioFormatError, read_wav, write_wav

MANIFEST_COLUMNS = ("speaker_id", "utt_id", "whispered_path", "normal_path", "sex")


class CorpusWarning(UserWarning):
    pass


@dataclass
class UtterancePair:
    speaker_id: str
    utt_id: str
    whispered: object  # AudioClip or path
    normal: object
    sex: str = ""
    alignment: object = None
    tempo: float = 1.0  # whispered/normal duration ratio (fixtures only)

    @property
    def pair_id(self):
        return f"{self.speaker_id}_{self.utt_id}"

    def load(self):
        """Return ``(whispered_clip, normal_clip)``, reading files on demand."""
        return _load(self.whispered), _load(self.normal)


def _load(ref):
    return ref if isinstance(ref, AudioClip) else read_wav(ref)


@dataclass(frozen=True)
class SplitSpec:
    test_speakers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "test_speakers", tuple(str(s) for s in self.test_speakers))


def read_manifest(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in MANIFEST_COLUMNS[:4] if c not in (reader.fieldnames or [])]
            if missing:
                raise ValueError(f"manifest {path} lacks columns {missing}")
            return list(reader)
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise ValueError(f"cannot read manifest {path}: {exc}") from exc


def ingest_corpus(root, manifest, check_audio=True):
    """Resolve manifest rows (paths relative to ``root``) into utterance pairs.

    Rows with missing or unreadable audio are skipped with a
    :class:`CorpusWarning`.
    """
    root = Path(root)
    pairs = []
    for n, row in enumerate(read_manifest(manifest), start=2):
        paths = [root / row["whispered_path"], root / row["normal_path"]]
        problem = None
        for p in paths:
            if not p.is_file():
                problem = f"missing file {p}"
                break
            if check_audio:
                try:
                    read_wav(p)
                except AudioFormatError as exc:
                    problem = str(exc)
                    break
        if problem:
            warnings.warn(f"manifest line {n}: {problem}; row skipped", CorpusWarning, stacklevel=2)
            continue
        pairs.append(UtterancePair(row["speaker_id"], row["utt_id"], paths[0], paths[1],
                                   (row.get("sex") or "").upper()))
    return pairs


def write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def split(pairs, spec: SplitSpec):
    """Speaker-disjoint ``(train, test)`` partition."""
    test_ids = set(spec.test_speakers)
    train = [p for p in pairs if p.speaker_id not in test_ids]
    test = [p for p in pairs if p.speaker_id in test_ids]
    return train, test


def default_split_spec(pairs, n_female=5, n_male=5):
    """First ``n_female`` female and ``n_male`` male speakers (sorted ids) as the test set."""
    by_sex = {}
    for p in pairs:
        by_sex.setdefault(p.sex, set()).add(p.speaker_id)
    if "F" in by_sex or "M" in by_sex:
        test = sorted(by_sex.get("F", ()))[:n_female] + sorted(by_sex.get("M", ()))[:n_male]
    else:
        test = sorted({p.speaker_id for p in pairs})[:n_female + n_male]
    return SplitSpec(tuple(test))


def speaker_counts(pairs):
    """``{sex: n_speakers}`` over distinct speakers."""
    seen = {}
    for p in pairs:
        seen[p.speaker_id] = p.sex
    counts = {}
    for sex in seen.values():
        counts[sex] = counts.get(sex, 0) + 1
    return counts


# synthetic fixtures ----------------------------------------------------------

_FORMANT_RANGES = ((300.0, 850.0), (850.0, 2300.0), (2300.0, 3300.0))


def _envelope_track(rng, duration, seg_range=(0.08, 0.2)):
    """Random formant targets at knot times; returns (knot_times, formants, bandwidths, gains)."""
    times = [0.0]
    while times[-1] < duration:
        times.append(times[-1] + rng.uniform(*seg_range))
    n = len(times)
    formants = np.stack([rng.uniform(lo, hi, n) for lo, hi in _FORMANT_RANGES], axis=1)
    bandwidths = rng.uniform(120.0, 300.0, (n, 3))
    gains = rng.uniform(0.35, 1.0, n)
    return np.asarray(times), formants, bandwidths, gains


def _envelope_at(track, t, freqs):
    knots, formants, bws, gains = track
    fm = np.stack([np.interp(t, knots, formants[:, i]) for i in range(3)], axis=1)
    bw = np.stack([np.interp(t, knots, bws[:, i]) for i in range(3)], axis=1)
    g = np.interp(t, knots, gains)
    log_h = np.zeros((freqs.size, t.size))
    for i, level in enumerate((3.0, 2.2, 1.5)):
        log_h += level * np.exp(-0.5 * ((freqs[:, None] - fm[None, :, i]) / bw[None, :, i]) ** 2)
    log_h -= freqs[:, None] / 3000.0
    return np.exp(log_h) * g[None, :]


def _shape(excitation, track, time_of_frame, sr, n_fft=1024, hop=256):
    spec = dsp.stft(excitation, n_fft, hop)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sr)
    t = time_of_frame(np.arange(spec.shape[1]) * hop / sr)
    out = dsp.istft(spec * _envelope_at(track, t, freqs), hop, length=excitation.size)
    return out


def _harmonic(f0, sr):
    phase = 2 * np.pi * np.cumsum(f0) / sr
    out = np.zeros_like(f0)
    for k in range(1, int(sr / 2 / f0.min()) + 1):
        amp = np.where(k * f0 < sr / 2, 1.0 / k, 0.0)
        out += amp * np.sin(k * phase)
    return out


def _pad_silence(x, rng, sr, lo, hi, noise=1e-4):
    lead = int(rng.uniform(lo, hi) * sr)
    tail = int(rng.uniform(lo, hi) * sr)
    y = np.concatenate([np.zeros(lead), x, np.zeros(tail)])
    return y + noise * rng.standard_normal(y.size)


def _peak(x, peak):
    return x * (peak / np.max(np.abs(x)))


def synth_fixture(n_speakers=2, n_utts=2, seed=0, sample_rate=22050, duration=(1.5, 2.5),
                  tempo_range=0.2, whisper_silence=(0.3, 1.0), normal_silence=(0.02, 0.08)):
    """Deterministic paired corpus with known structure.

    Normal utterances are harmonic excitations (pitch 80-300 Hz) through a
    slowly varying formant envelope.  The whispered twin drives the same
    envelope with noise, runs at a random tempo within ``+-tempo_range`` and
    carries longer leading/trailing silence.
    """
    rng = np.random.default_rng(seed)
    sr = sample_rate
    pairs = []
    for s in range(n_speakers):
        sex = "F" if s % 2 == 0 else "M"
        base = rng.uniform(170.0, 240.0) if sex == "F" else rng.uniform(95.0, 140.0)
        speaker = f"spk{s:02d}"
        for u in range(n_utts):
            dur = rng.uniform(*duration)
            track = _envelope_track(rng, dur)
            n = int(dur * sr)
            t = np.arange(n) / sr
            contour = base * (1.0 + 0.12 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * t + rng.uniform(0, 2 * np.pi)))
            contour *= np.linspace(1.05, 0.92, n)
            f0 = np.clip(contour, 80.0, 300.0)
            normal = _shape(_harmonic(f0, sr), track, lambda tt: tt, sr)
            normal = _pad_silence(_peak(normal, 0.8), rng, sr, *normal_silence)

            tempo = rng.uniform(1.0 - tempo_range, 1.0 + tempo_range)
            n_w = int(n * tempo)
            noise = rng.standard_normal(n_w)
            whisper = _shape(noise, track, lambda tt, k=tempo: np.minimum(tt / k, dur), sr)
            whisper = _pad_silence(_peak(whisper, 0.3), rng, sr, *whisper_silence)
            pairs.append(UtterancePair(
                speaker, f"u{u:03d}",
                AudioClip(np.clip(whisper, -1, 1), sr),
                AudioClip(np.clip(normal, -1, 1), sr),
                sex,
                tempo=tempo,
            ))
    return pairs


def write_fixture(outdir, pairs):
    """Write fixture pairs as WAV files plus ``manifest.csv``; returns the manifest path."""
    outdir = Path(outdir)
    rows = []
    for p in pairs:
        w, nrm = p.load()
        rel_w = Path(p.speaker_id) / f"{p.utt_id}_whsp.wav"
        rel_n = Path(p.speaker_id) / f"{p.utt_id}_norm.wav"
        (outdir / p.speaker_id).mkdir(parents=True, exist_ok=True)
        write_wav(outdir / rel_w, w)
        write_wav(outdir / rel_n, nrm)
        rows.append({"speaker_id": p.speaker_id, "utt_id": p.utt_id, "whispered_path": str(rel_w),
                     "normal_path": str(rel_n), "sex": p.sex})
    manifest = outdir / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest
