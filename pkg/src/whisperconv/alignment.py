"""DTW alignment of mel sequences and its sample-level bootstrap."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .audio import AudioClip

ALIGN_MAGIC = b"WCAL"


@dataclass(frozen=True, eq=False)
class AlignmentPath:
    """Monotone frame path ``pairs[k] = (i, j)`` and its cumulative cost."""

    pairs: np.ndarray
    total_cost: float

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.shape[0] < 1:
            raise ValueError("alignment path is empty")
        if pairs[0, 0] != 0 or pairs[0, 1] != 0:
            raise ValueError("alignment path must start at (0, 0)")
        steps = np.diff(pairs, axis=0)
        if steps.size and (steps.min() < 0 or steps.max() > 1 or np.any(steps.sum(axis=1) == 0)):
            raise ValueError("alignment path steps must be (1,0), (0,1) or (1,1)")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "total_cost", float(self.total_cost))

    def __len__(self):
        return self.pairs.shape[0]

    @property
    def shape(self):
        """Frame counts ``(I, J)`` implied by the path end."""
        return int(self.pairs[-1, 0]) + 1, int(self.pairs[-1, 1]) + 1

    def transpose(self):
        return AlignmentPath(self.pairs[:, ::-1].copy(), self.total_cost)


@dataclass(frozen=True, eq=False)
class SampleAlignment:
    whsp_indices: np.ndarray
    norm_indices: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.whsp_indices, dtype=np.int64)
        n = np.asarray(self.norm_indices, dtype=np.int64)
        if w.shape != n.shape or w.ndim != 1:
            raise ValueError("sample alignment index arrays must be 1-D and equal length")
        object.__setattr__(self, "whsp_indices", w)
        object.__setattr__(self, "norm_indices", n)

    def __len__(self):
        return self.whsp_indices.size


@numba.njit(cache=True)
def _dtw_accumulate(cost):
    n, m = cost.shape
    acc = np.full((n, m), np.inf)
    acc[0, 0] = cost[0, 0]
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            best = np.inf
            if i > 0 and j > 0:
                best = acc[i - 1, j - 1]
            if i > 0 and acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = cost[i, j] + best
    return acc


@numba.njit(cache=True)
def _dtw_backtrack(acc):
    n, m = acc.shape
    out = np.empty((n + m - 1, 2), dtype=np.int64)
    i, j = n - 1, m - 1
    k = 0
    out[k, 0] = i
    out[k, 1] = j
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            # ties resolved diagonal first, then whispered advance
            if diag <= up and diag <= left:
                i -= 1
                j -= 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        k += 1
        out[k, 0] = i
        out[k, 1] = j
    return out[: k + 1][::-1].copy()


def frame_distances(a, b):
    """Euclidean distance between every frame of ``a`` and ``b`` (``[dim, frames]``)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = a.T[:, None, :] - b.T[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _as_matrix(x):
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def dtw(a, b) -> AlignmentPath:
    """Exact DTW over ``[dim, frames]`` matrices with steps (1,0), (0,1), (1,1)."""
    a, b = _as_matrix(a), _as_matrix(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] < 1 or b.shape[1] < 1:
        raise ValueError("dtw inputs must be non-empty [dim, frames] matrices")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"feature dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[1] * b.shape[1] <= 4_000_000:
        cost = frame_distances(a, b)
    else:
        cost = np.empty((a.shape[1], b.shape[1]))
        for s in range(0, a.shape[1], 256):
            cost[s:s + 256] = frame_distances(a[:, s:s + 256], b)
    acc = _dtw_accumulate(cost)
    return AlignmentPath(_dtw_backtrack(acc), acc[-1, -1])


def dtw_align(a, b) -> AlignmentPath:
    """Align whispered mel ``a`` to normal mel ``b``."""
    if getattr(a, "n_mels", None) is not None and getattr(b, "n_mels", None) is not None:
        if a.n_mels != b.n_mels:
            raise ValueError(f"n_mels mismatch: {a.n_mels} vs {b.n_mels}")
    return dtw(a, b)


def bootstrap_path(path: AlignmentPath, hop: int, len_w: int, len_n: int) -> SampleAlignment:
    """Linearly interpolate the frame path to one index pair per sample.

    Path point ``k`` sits at arc position ``k * hop``; between two points
    each coordinate moves linearly, so a ``(1, 0)`` step advances the
    whispered index while the normal index holds.  Indices are clipped to
    the signal bounds and pairs repeated by the clipping are dropped.
    """
    n_w, n_n = path.shape
    if n_w != len_w // hop + 1 or n_n != len_n // hop + 1:
        raise ValueError(
            f"path spans {n_w}x{n_n} frames but signal lengths {len_w}/{len_n} "
            f"at hop {hop} imply {len_w // hop + 1}x{len_n // hop + 1}"
        )
    pairs = path.pairs * hop
    if len(path) == 1:
        w = np.zeros(1, dtype=np.int64)
        return SampleAlignment(w, w.copy())
    steps = np.diff(pairs, axis=0) // hop
    r = np.arange(hop)
    w = (pairs[:-1, 0, None] + steps[:, 0, None] * r[None, :]).ravel()
    n = (pairs[:-1, 1, None] + steps[:, 1, None] * r[None, :]).ravel()
    w = np.append(w, pairs[-1, 0])
    n = np.append(n, pairs[-1, 1])
    w = np.minimum(w, len_w - 1)
    n = np.minimum(n, len_n - 1)
    keep = np.ones(w.size, dtype=bool)
    keep[1:] = (np.diff(w) != 0) | (np.diff(n) != 0)
    return SampleAlignment(w[keep], n[keep])


def equalize_lengths(whsp: AudioClip, norm: AudioClip, sa: SampleAlignment):
    """Gather both signals along the sample alignment so their lengths match."""
    if len(sa) == 0:
        raise ValueError("empty sample alignment")
    for name, idx, clip in (("whispered", sa.whsp_indices, whsp), ("normal", sa.norm_indices, norm)):
        if idx.min() < 0 or idx.max() >= len(clip):
            raise IndexError(f"{name} alignment index out of bounds [0, {len(clip)})")
    return whsp.with_samples(whsp.samples[sa.whsp_indices]), norm.with_samples(norm.samples[sa.norm_indices])


def write_alignment(path, pair_id: str, alignment: AlignmentPath) -> None:
    """Binary cache: magic, id length + utf-8 id, path length, cost, int32 (i, j) pairs."""
    ident = pair_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(ALIGN_MAGIC)
        fh.write(struct.pack("<I", len(ident)))
        fh.write(ident)
        fh.write(struct.pack("<Id", len(alignment), alignment.total_cost))
        fh.write(alignment.pairs.astype("<i4").tobytes())


def read_alignment(path):
    """Return ``(pair_id, AlignmentPath)`` from a cache file."""
    raw = Path(path).read_bytes()
    if raw[:4] != ALIGN_MAGIC:
        raise ValueError(f"{path}: not an alignment cache file")
    (id_len,) = struct.unpack_from("<I", raw, 4)
    off = 8 + id_len
    pair_id = raw[8:off].decode("utf-8")
    n, cost = struct.unpack_from("<Id", raw, off)
    off += 12
    pairs = np.frombuffer(raw[off:off + 8 * n], dtype="<i4").reshape(n, 2)
    return pair_id, AlignmentPath(pairs.astype(np.int64), cost)
