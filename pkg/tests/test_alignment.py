import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_dtw
from whisperconv.alignment import (AlignmentPath, SampleAlignment, bootstrap_path, dtw, dtw_align,
                                   equalize_lengths, read_alignment, write_alignment)
from whisperconv.audio import AudioClip
from whisperconv.preprocess import MelSpectrogram, StftConfig


def _path_ok(pairs, n, m):
    assert tuple(pairs[0]) == (0, 0) and tuple(pairs[-1]) == (n - 1, m - 1)
    steps = np.diff(pairs, axis=0)
    assert np.all((steps >= 0) & (steps <= 1)) and np.all(steps.sum(axis=1) > 0)


def test_identical_sequences_diagonal_zero_cost(rng):
    a = rng.standard_normal((80, 12))
    p = dtw(a, a)
    assert p.total_cost == 0.0
    assert np.array_equal(p.pairs, np.stack([np.arange(12)] * 2, axis=1))


def test_duplicated_frame_absorbed(rng):
    a = rng.standard_normal((10, 8))
    b = np.insert(a, 3, a[:, 3], axis=1)
    p = dtw(a, b)
    steps = np.diff(p.pairs, axis=0)
    assert p.total_cost == 0.0
    assert int(np.sum(steps.sum(axis=1) == 1)) == 1


def test_matches_enumeration_8x5(rng):
    a, b = rng.standard_normal((4, 8)), rng.standard_normal((4, 5))
    cost, path, n_paths, n_best = brute_force_dtw(a, b)
    p = dtw(a, b)
    assert p.total_cost == cost
    if n_best == 1:
        assert np.array_equal(p.pairs, path)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**31))
def test_path_invariants(n, m, seed):
    r = np.random.default_rng(seed)
    p = dtw(r.standard_normal((3, n)), r.standard_normal((3, m)))
    _path_ok(p.pairs, n, m)
    assert max(n, m) <= len(p) <= n + m - 1


def test_transpose_symmetry(rng):
    a, b = rng.standard_normal((5, 9)), rng.standard_normal((5, 6))
    assert dtw(a, b).total_cost == pytest.approx(dtw(b, a).total_cost, rel=1e-12)
    assert dtw(a, b).transpose().shape == (6, 9)


def test_rejects_dim_mismatch_and_empty(rng):
    cfg = StftConfig()
    with pytest.raises(ValueError):
        dtw(rng.standard_normal((4, 3)), rng.standard_normal((5, 3)))
    with pytest.raises(ValueError):
        dtw(np.zeros((4, 0)), np.zeros((4, 3)))
    a = MelSpectrogram(rng.standard_normal((80, 3)), cfg)
    b = MelSpectrogram(rng.standard_normal((40, 3)), StftConfig(n_mels=40))
    with pytest.raises(ValueError):
        dtw_align(a, b)


def test_path_validation():
    with pytest.raises(ValueError):
        AlignmentPath(np.array([[0, 0], [2, 1]]), 0.0)
    with pytest.raises(ValueError):
        AlignmentPath(np.array([[1, 0]]), 0.0)


def test_bootstrap_diagonal_identity():
    n = 10
    p = AlignmentPath(np.stack([np.arange(n)] * 2, axis=1), 0.0)
    sa = bootstrap_path(p, 256, 256 * (n - 1) + 100, 256 * (n - 1) + 100)
    assert np.array_equal(sa.whsp_indices, np.arange(256 * (n - 1) + 1))
    assert np.array_equal(sa.whsp_indices, sa.norm_indices)


def test_bootstrap_single_segment():
    sa = bootstrap_path(AlignmentPath(np.array([[0, 0], [1, 1]]), 0.0), 4, 5, 5)
    assert sa.whsp_indices.tolist() == [0, 1, 2, 3, 4]
    assert sa.norm_indices.tolist() == [0, 1, 2, 3, 4]


def _piecewise_linear(pairs, hop):
    """Direct evaluation: point k at arc k * hop, unit steps in between."""
    w, n = [], []
    pts = pairs * hop
    for k in range(len(pts) - 1):
        for r in range(hop):
            t = r / hop
            w.append(int(round(pts[k, 0] + t * (pts[k + 1, 0] - pts[k, 0]))))
            n.append(int(round(pts[k, 1] + t * (pts[k + 1, 1] - pts[k, 1]))))
    w.append(int(pts[-1, 0]))
    n.append(int(pts[-1, 1]))
    return np.array(w), np.array(n)


def test_bootstrap_horizontal_step_holds_normal_index():
    pairs = np.array([[0, 0], [1, 0], [2, 1], [2, 2], [3, 3]])
    hop = 8
    sa = bootstrap_path(AlignmentPath(pairs, 0.0), hop, 3 * hop + 1, 3 * hop + 1)
    w, n = _piecewise_linear(pairs, hop)
    assert np.array_equal(sa.whsp_indices, w) and np.array_equal(sa.norm_indices, n)
    assert np.all(sa.norm_indices[:hop] == 0) and np.all(np.diff(sa.whsp_indices[:hop]) == 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 15), st.integers(1, 15), st.integers(0, 2**31), st.integers(1, 16))
def test_bootstrap_monotone_clipped(n, m, seed, hop):
    r = np.random.default_rng(seed)
    p = dtw(r.standard_normal((2, n)), r.standard_normal((2, m)))
    len_w = (n - 1) * hop + int(r.integers(hop))
    len_n = (m - 1) * hop + int(r.integers(hop))
    if len_w < 1 or len_n < 1:
        return
    sa = bootstrap_path(p, hop, len_w, len_n)
    for idx, length in ((sa.whsp_indices, len_w), (sa.norm_indices, len_n)):
        assert idx.min() >= 0 and idx.max() <= length - 1
        assert np.all(np.diff(idx) >= 0)
    assert np.all((np.diff(sa.whsp_indices) > 0) | (np.diff(sa.norm_indices) > 0))


def test_bootstrap_rejects_inconsistent_lengths():
    p = AlignmentPath(np.array([[0, 0], [1, 1]]), 0.0)
    with pytest.raises(ValueError):
        bootstrap_path(p, 256, 10_000, 300)


def test_equalize_identity_and_errors():
    w, n = AudioClip(np.arange(6) / 10, 100), AudioClip(-np.arange(6) / 10, 100)
    sa = SampleAlignment(np.arange(6), np.arange(6))
    ew, en = equalize_lengths(w, n, sa)
    assert np.array_equal(ew.samples, w.samples) and np.array_equal(en.samples, n.samples)
    with pytest.raises(IndexError):
        equalize_lengths(w, n, SampleAlignment(np.array([0, 9]), np.array([0, 1])))
    with pytest.raises(ValueError):
        equalize_lengths(w, n, SampleAlignment(np.zeros(0), np.zeros(0)))


def test_twice_slower_whisper_repeats_normal_samples():
    hop = 16
    norm = np.sin(np.arange(hop * 20 + 1) * 0.05)
    whsp = np.repeat(norm, 2)[: hop * 40 + 1]
    # known warp: every normal frame j is visited by whispered frames 2j and 2j+1
    pairs = [(0, 0)]
    for j in range(1, 21):
        pairs += [(2 * j - 1, j - 1), (2 * j, j)]
    p = AlignmentPath(np.array(pairs), 0.0)
    sa = bootstrap_path(p, hop, whsp.size, norm.size)
    ew, en = equalize_lengths(AudioClip(whsp * 0.5, 1000), AudioClip(norm * 0.5, 1000), sa)
    assert len(ew) == len(en) == len(sa)
    assert len(en) > norm.size and np.unique(sa.norm_indices).size == norm.size


def test_alignment_file_round_trip(tmp_path, rng):
    p = dtw(rng.standard_normal((3, 7)), rng.standard_normal((3, 5)))
    write_alignment(tmp_path / "a.bin", "spk_utt", p)
    pid, q = read_alignment(tmp_path / "a.bin")
    assert pid == "spk_utt" and np.array_equal(q.pairs, p.pairs) and q.total_cost == p.total_cost
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        read_alignment(tmp_path / "bad.bin")
