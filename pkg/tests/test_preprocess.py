import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SR, tone
from whisperconv import dsp
from whisperconv.audio import AudioClip
from whisperconv.preprocess import (AllSilenceWarning, AudioPreprocessor, MelSpectrogramTransformer,
                                    StftConfig, VadConfig, mel_spectrogram, normalize_volume, resample,
                                    speech_frames, trim_silence)


def test_normalize_silence_is_fixed_point():
    clip = AudioClip(np.zeros(100), SR)
    assert np.array_equal(normalize_volume(clip, 0.95).samples, clip.samples)


def test_normalize_linear_gain():
    x = np.linspace(-0.5, 0.5, 101)
    out = normalize_volume(AudioClip(x, SR), 0.95)
    np.testing.assert_allclose(out.samples, x * 1.9, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 1.0))
def test_normalize_hits_target_peak(seed, peak):
    x = np.random.default_rng(seed).uniform(-1, 1, 500) * 0.3
    out = normalize_volume(AudioClip(x, SR), peak)
    assert abs(np.max(np.abs(out.samples)) - peak) < 1e-6


def test_normalize_rejects_bad_peak():
    with pytest.raises(ValueError):
        normalize_volume(AudioClip(np.ones(4) * 0.1, SR), 1.5)


def test_trim_tone_between_silences():
    sil = np.zeros(SR)
    x = np.concatenate([sil, tone(300, 2.0).samples, sil])
    out = trim_silence(AudioClip(x, SR))
    # one partial frame on each edge plus the 200 ms trailing hangover
    assert 2.0 <= out.duration <= 2.0 + 0.2 + 2 * 0.025 + 0.01


def test_trim_leaves_interior_untouched():
    x = np.concatenate([np.zeros(SR // 2), tone(300, 1.0).samples, np.zeros(SR // 4),
                        tone(500, 1.0).samples, np.zeros(SR)])
    clip = AudioClip(x, SR)
    active, _, shift = speech_frames(clip)
    start = np.flatnonzero(active)[0] * shift
    out = trim_silence(clip)
    assert start <= SR // 2 and len(out) > 2.25 * SR
    assert np.array_equal(out.samples, x[start:start + len(out)])


def test_trim_no_silence_is_identity():
    clip = tone(200, 1.0)
    assert trim_silence(clip) is clip


def test_trim_all_silence_warns_and_keeps_one_frame():
    with pytest.warns(AllSilenceWarning):
        out = trim_silence(AudioClip(np.zeros(SR), SR))
    assert len(out) == int(round(0.025 * SR))


def test_whispered_trimmed_more_than_normal(fixture_pairs):
    cut_w, cut_n = [], []
    for p in fixture_pairs:
        w, n = p.load()
        cut_w.append(w.duration - trim_silence(normalize_volume(w)).duration)
        cut_n.append(n.duration - trim_silence(normalize_volume(n)).duration)
    assert np.mean(cut_w) > 5 * np.mean(cut_n)


def test_speech_frames_threshold_tracks_noise_floor():
    x = np.concatenate([0.001 * np.random.default_rng(0).standard_normal(SR), tone(200, 1.0).samples])
    active, _, _ = speech_frames(AudioClip(x, SR), VadConfig(hangover_ms=0))
    assert not active[:90].any() and active[-90:].all()


def test_resample_identity_short_circuit():
    clip = tone(100, 0.1)
    assert resample(clip, SR) is clip


def test_resample_length_and_pitch():
    clip = tone(440, 2.0, sr=16000)
    out = resample(clip, 22050)
    assert abs(len(out) - 44100) <= 1
    spec = np.abs(np.fft.rfft(out.samples))
    freq = np.fft.rfftfreq(len(out), 1 / 22050)[np.argmax(spec)]
    assert abs(freq - 440) <= 1


def test_resample_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        resample(tone(100, 0.1), 0)


def test_mel_silence_is_floor():
    mel = mel_spectrogram(AudioClip(np.zeros(2560), SR))
    assert np.all(mel.values == np.log(1e-5))


def test_mel_frame_count():
    assert mel_spectrogram(AudioClip(np.zeros(2560), SR)).n_frames == 11


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5000))
def test_mel_frame_count_any_length(n):
    x = np.random.default_rng(n).uniform(-0.1, 0.1, n) if n > 512 else np.zeros(n)
    if n <= 512:  # reflect padding needs more than n_fft / 2 samples
        return
    assert mel_spectrogram(AudioClip(x, SR)).n_frames == n // 256 + 1


def test_mel_sine_peaks_in_band_containing_frequency():
    cfg = StftConfig()
    mel = mel_spectrogram(tone(440, 0.5), cfg).values
    fb = cfg.filterbank()
    bin_440 = int(round(440 * cfg.fft_size / SR))
    expected = np.argmax(fb[:, bin_440])
    assert np.all(np.argmax(mel[:, 2:-2], axis=0) == expected)


def test_mel_rejects_rate_mismatch():
    with pytest.raises(ValueError):
        mel_spectrogram(tone(200, 0.2, sr=16000))


def test_filterbank_unit_peak_and_htk_centres():
    fb = dsp.mel_filterbank(22050, 1024, 80, 0, 11025)
    assert fb.shape == (80, 513)
    assert fb.max() <= 1.0 + 1e-12
    edges = dsp.mel_band_edges(80, 0, 11025)
    np.testing.assert_allclose(dsp.hz_to_mel(edges[1]) - dsp.hz_to_mel(edges[0]),
                               dsp.hz_to_mel(11025) / 81, rtol=1e-12)


def test_stft_istft_round_trip():
    x = np.random.default_rng(0).standard_normal(5000)
    y = dsp.istft(dsp.stft(x, 1024, 256), 256, length=x.size)
    np.testing.assert_allclose(y, x, atol=1e-8)


def test_stft_config_validation():
    with pytest.raises(ValueError):
        StftConfig(hop_length=2048)
    with pytest.raises(ValueError):
        StftConfig(fmax=20000)


def test_estimator_wrappers():
    clips = [AudioClip(np.concatenate([np.zeros(SR), tone(200, 1.0, sr=16000).samples]), 16000)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = AudioPreprocessor().fit_transform(clips)
    assert out[0].sample_rate == SR and abs(np.max(np.abs(out[0].samples)) - 0.95) < 1e-9
    mels = MelSpectrogramTransformer().fit_transform(out)
    assert mels[0].n_mels == 80
    assert AudioPreprocessor(trim=False).get_params()["trim"] is False
