import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import sawtooth

import oracles
from conftest import SR
from whisperconv.audio import AudioClip
from whisperconv.metrics import (MCD_SCALE, CepstraTrack, F0Track, evaluate_testset, extract_f0,
                                 extract_mel_cepstra, mcd, pearson_corr_f0, rmse_f0, write_report)


def saw(freq, seconds=1.0):
    t = np.arange(int(seconds * SR)) / SR
    return AudioClip(0.5 * sawtooth(2 * np.pi * freq * t), SR)


def test_f0_sawtooth():
    track = extract_f0(saw(220.0))
    interior = track.f0[5:-5]
    assert np.mean(np.abs(interior - 220.0) <= 2.0) >= 0.95
    assert track.frame_shift == pytest.approx(0.01, abs=1e-4)


def test_f0_silence_and_noise_unvoiced():
    assert not extract_f0(AudioClip(np.zeros(SR), SR)).voiced.any()
    noise = AudioClip(np.random.default_rng(0).uniform(-0.5, 0.5, SR), SR)
    assert np.mean(~extract_f0(noise).voiced) >= 0.8


def test_f0_short_clip_empty():
    assert len(extract_f0(AudioClip(np.zeros(500), SR))) == 0


def test_f0_time_stretch_equivariance():
    base = extract_f0(saw(150.0, 1.0))
    longer = extract_f0(saw(150.0, 2.0))
    assert len(longer) == pytest.approx(2 * len(base), abs=2)
    assert np.median(longer.f0[longer.voiced]) == pytest.approx(np.median(base.f0[base.voiced]), abs=1.0)


def test_cepstra_shape_and_gain_separation():
    x = np.random.default_rng(0).uniform(-0.3, 0.3, SR)
    a, b = extract_mel_cepstra(AudioClip(x, SR)), extract_mel_cepstra(AudioClip(2 * x, SR))
    assert a.coeffs.shape[1] == 25
    np.testing.assert_allclose(b.coeffs[:, 1:], a.coeffs[:, 1:], atol=1e-8)
    np.testing.assert_allclose(b.coeffs[:, 0] - a.coeffs[:, 0], math.sqrt(80) * math.log(2), rtol=1e-9)


def test_cepstra_silence():
    c = extract_mel_cepstra(AudioClip(np.zeros(SR // 2), SR)).coeffs
    np.testing.assert_allclose(c[:, 1:], 0.0, atol=1e-9)
    np.testing.assert_allclose(c[:, 0], math.sqrt(80) * math.log(1e-5), rtol=1e-12)


def test_mcd_identity_and_closed_form(rng):
    c = CepstraTrack(rng.standard_normal((10, 25)), 0.01)
    assert mcd(c, c) == (0.0, 0.0)
    delta = 0.37
    a = np.zeros((1, 25))
    b = a.copy()
    b[0, 3] = delta
    m, s = mcd(CepstraTrack(a, 0.01), CepstraTrack(b, 0.01))
    assert abs(m - MCD_SCALE * math.sqrt(2) * delta) <= 1e-9 and s == 0.0


def test_mcd_matches_oracle_unaligned(rng):
    a, b = rng.standard_normal((5, 25)), rng.standard_normal((5, 25))
    m, s = mcd(CepstraTrack(a, 0.01), CepstraTrack(b, 0.01), align=False)
    frames = [oracles.mcd_frame(x, y) for x, y in zip(a, b)]
    assert abs(m - np.mean(frames)) <= 1e-9 and abs(s - np.std(frames)) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_mcd_symmetric_non_negative(seed):
    r = np.random.default_rng(seed)
    a = CepstraTrack(r.standard_normal((int(r.integers(1, 12)), 25)), 0.01)
    b = CepstraTrack(r.standard_normal((int(r.integers(1, 12)), 25)), 0.01)
    m_ab, m_ba = mcd(a, b)[0], mcd(b, a)[0]
    assert m_ab >= 0 and m_ab == pytest.approx(m_ba, rel=1e-12)


def test_mcd_rejects_empty():
    with pytest.raises(ValueError):
        CepstraTrack(np.zeros((0, 25)), 0.01)


def test_rmse_cases(rng):
    a = F0Track(np.full(50, 100.0), 0.01)
    assert rmse_f0(a, a) == 0.0
    assert rmse_f0(a, F0Track(np.full(50, 112.0), 0.01)) == pytest.approx(12.0)
    assert math.isnan(rmse_f0(a, F0Track(np.zeros(50), 0.01)))
    x, y = rng.uniform(80, 300, 40), rng.uniform(80, 300, 40)
    expected = math.sqrt(sum((p - q) ** 2 for p, q in zip(x, y)) / 40)
    assert rmse_f0(F0Track(x, 0.01), F0Track(y, 0.01)) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        rmse_f0(a, a, frames="some")


def test_rmse_all_frames_counts_unvoiced():
    a = F0Track(np.array([100.0, 0.0]), 0.01)
    b = F0Track(np.array([100.0, 100.0]), 0.01)
    assert rmse_f0(a, b) == 0.0
    assert rmse_f0(a, b, frames="all") == pytest.approx(math.sqrt(0.5) * 100)


def test_pearson_cases(rng):
    x = rng.uniform(80, 300, 100)
    t = F0Track(x, 0.01)
    assert abs(pearson_corr_f0(t, t) - 1.0) <= 1e-9
    assert abs(pearson_corr_f0(t, F0Track(3.0 * x + 7.0, 0.01)) - 1.0) <= 1e-9
    y = 2 * x.mean() - x
    assert pearson_corr_f0(t, F0Track(y, 0.01)) == pytest.approx(-1.0, abs=1e-9)
    z = rng.uniform(80, 300, 100)
    assert pearson_corr_f0(t, F0Track(z, 0.01)) == pytest.approx(oracles.pearson(x, z), abs=1e-12)
    assert math.isnan(pearson_corr_f0(F0Track(np.full(5, 100.0), 0.01), t))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_f0_metrics_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    x, y = r.uniform(80, 300, 30), r.uniform(80, 300, 30)
    x[r.random(30) < 0.3] = 0
    perm = r.permutation(30)
    a, b = F0Track(x, 0.01), F0Track(y, 0.01)
    pa, pb = F0Track(x[perm], 0.01), F0Track(y[perm], 0.01)
    assert rmse_f0(a, b) == pytest.approx(rmse_f0(pa, pb), rel=1e-12)
    assert pearson_corr_f0(a, b) == pytest.approx(pearson_corr_f0(pa, pb), rel=1e-9, abs=1e-12)


def test_whisper_proxy_uncorrelated(fixture_pairs):
    w, n = fixture_pairs[0].load()
    rows, report = evaluate_testset([("u", w, n)])
    assert math.isnan(report.corr) or abs(report.corr) < 0.3


def test_evaluate_identity_and_report(tmp_path, fixture_pairs):
    items = []
    for p in fixture_pairs:
        _, n = p.load()
        items.append((p.pair_id, n, n))
    rows, report = evaluate_testset(items)
    assert len(rows) == len(fixture_pairs) == report.n_utterances
    assert report.rmse == 0.0 and report.corr == pytest.approx(1.0) and report.mcd_mean == 0.0
    assert report.mcd_std == 0.0
    csv_path, json_path = write_report(rows, report, tmp_path)
    import json

    payload = json.loads(json_path.read_text())
    assert {"RMSE", "Corr", "MCD mean", "MCD std"} <= set(payload)
    assert len(csv_path.read_text().strip().splitlines()) == len(rows) + 1
