"""Paired preprocessing: normalize, trim, mel, DTW, bootstrap, equalize; plus the on-disk cache."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .alignment import (AlignmentPath, SampleAlignment, bootstrap_path, dtw_align, equalize_lengths,
                        read_alignment, write_alignment)
from .audio import AudioClip, read_mel_file, read_wav, write_mel_file, write_wav
from .preprocess import (MelSpectrogram, StftConfig, VadConfig, mel_spectrogram, normalize_volume,
                         resample, trim_silence)


@dataclass
class PreparedPair:
    whispered: AudioClip          # equalized
    normal: AudioClip             # equalized
    whisper_mel: MelSpectrogram   # features of the equalized whispered clip
    path: AlignmentPath
    sample_alignment: SampleAlignment


def prepare_pair(whsp: AudioClip, norm: AudioClip, stft=StftConfig(), vad=VadConfig(), target_peak=0.95):
    """Run the full alignment pipeline on one whispered/normal pair."""
    clips = []
    for clip in (whsp, norm):
        clip = normalize_volume(resample(clip, stft.sample_rate), target_peak)
        clips.append(trim_silence(clip, vad))
    w, n = clips
    path = dtw_align(mel_spectrogram(w, stft), mel_spectrogram(n, stft))
    sa = bootstrap_path(path, stft.hop_length, len(w), len(n))
    w_eq, n_eq = equalize_lengths(w, n, sa)
    return PreparedPair(w_eq, n_eq, mel_spectrogram(w_eq, stft), path, sa)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class PairCache:
    """``<workdir>/cache/<pair_id>/`` holding aligned WAVs, whispered mel and the DTW path."""

    def __init__(self, workdir):
        self.root = Path(workdir) / "cache"

    def entry(self, pair_id):
        return self.root / pair_id

    def is_current(self, pair_id, fingerprint):
        meta = self.entry(pair_id) / "meta.json"
        if not meta.is_file():
            return False
        try:
            return json.loads(meta.read_text()).get("fingerprint") == fingerprint
        except json.JSONDecodeError:
            return False

    def store(self, pair_id, prepared: PreparedPair, fingerprint, extra=None):
        d = self.entry(pair_id)
        d.mkdir(parents=True, exist_ok=True)
        write_wav(d / "whispered.wav", prepared.whispered)
        write_wav(d / "normal.wav", prepared.normal)
        mel = prepared.whisper_mel
        write_mel_file(d / "whispered.mel", mel.values, mel.config.hop_length, mel.config.sample_rate)
        write_alignment(d / "alignment.bin", pair_id, prepared.path)
        meta = {"pair_id": pair_id, "fingerprint": fingerprint, "n_samples": len(prepared.whispered),
                "n_frames": mel.n_frames, "dtw_cost": prepared.path.total_cost, **(extra or {})}
        (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    def load(self, pair_id, stft=StftConfig()):
        """Return ``(whisper_mel_values, normal_clip, alignment_path)``."""
        d = self.entry(pair_id)
        values, _, _ = read_mel_file(d / "whispered.mel")
        _, path = read_alignment(d / "alignment.bin")
        return values, read_wav(d / "normal.wav"), path

    def pair_ids(self):
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / "meta.json").is_file())
