"""Whispered-to-normal speech conversion.

Two whisper-conditioned models are provided: :class:`SCMelGAN`, a MelGAN
generator driven directly by whispered mel-spectrograms, and :class:`SCVQVAE`,
a VQ-VAE whose decoder emits either normal-speech mels or waveforms.
"""
__version__ = "0.1.0"

from .audio import AudioClip, read_wav, write_wav  # noqa: E402
from .preprocess import (AudioPreprocessor, MelSpectrogram, MelSpectrogramTransformer,  # noqa: E402
                         StftConfig, VadConfig, mel_spectrogram, normalize_volume, trim_silence)
from .alignment import (AlignmentPath, SampleAlignment, bootstrap_path, dtw, dtw_align,  # noqa: E402
                        equalize_lengths)
from .estimators import SCMelGAN, SCVQVAE  # noqa: E402
from .metrics import MetricsReport, evaluate_testset, extract_f0, mcd, pearson_corr_f0, rmse_f0  # noqa: E402
from .embed_eval import EmbeddingVector, SpectralStubBackend, distance_report, embed  # noqa: E402
from .corpus import UtterancePair, ingest_corpus, split, synth_fixture  # noqa: E402
from .checkpoint import load_checkpoint, save_checkpoint  # noqa: E402
from .pipeline import PreparedPair, prepare_pair  # noqa: E402

__all__ = [
    "AudioClip", "read_wav", "write_wav",
    "AudioPreprocessor", "MelSpectrogram", "MelSpectrogramTransformer", "StftConfig", "VadConfig",
    "mel_spectrogram", "normalize_volume", "trim_silence",
    "AlignmentPath", "SampleAlignment", "bootstrap_path", "dtw", "dtw_align", "equalize_lengths",
    "SCMelGAN", "SCVQVAE",
    "MetricsReport", "evaluate_testset", "extract_f0", "mcd", "pearson_corr_f0", "rmse_f0",
    "EmbeddingVector", "SpectralStubBackend", "distance_report", "embed",
    "UtterancePair", "ingest_corpus", "split", "synth_fixture",
    "load_checkpoint", "save_checkpoint", "PreparedPair", "prepare_pair",
]
