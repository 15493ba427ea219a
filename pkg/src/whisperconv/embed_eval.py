"""Latent-representation evaluation with pluggable self-supervised speech encoders."""
from __future__ import annotations

import csv
import struct
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .audio import AudioClip
from .preprocess import StftConfig, mel_from_samples, resample

EMB_MAGIC = b"WCEM"


class EmbeddingError(RuntimeError):
    """Backend failure while embedding a specific utterance."""


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    source: str
    utt_id: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError("embedding must be a finite non-empty vector")
        object.__setattr__(self, "values", v)


class EmbeddingBackend(Protocol):
    dim: int

    def frame_embeddings(self, clip: AudioClip, layer: int) -> np.ndarray:
        """``[n_frames, dim]`` hidden states at transformer block ``layer``."""


class SpectralStubBackend:
    """Deterministic, network-free stand-in: log-mel frames through a fixed random projection."""

    def __init__(self, dim=768, seed=0, sample_rate=22050):
        self.dim = dim
        self.seed = seed
        self.config = StftConfig(sample_rate=sample_rate)
        rng = np.random.default_rng(seed)
        self._proj = rng.normal(size=(self.config.n_mels, dim)) / np.sqrt(self.config.n_mels)

    def frame_embeddings(self, clip, layer=2):
        if clip.sample_rate != self.config.sample_rate:
            clip = resample(clip, self.config.sample_rate)
        mel = mel_from_samples(clip.samples, self.config)
        mel = mel - mel.mean(axis=0, keepdims=True)
        h = mel.T @ self._proj
        for _ in range(max(0, layer - 1)):
            h = np.tanh(h)
        return h


class Wav2Vec2Backend:
    """Hidden states of a local HuggingFace wav2vec 2.0 checkpoint (16 kHz input).

    ``hidden_states[layer]`` is the output of transformer block ``layer``
    (index 0 is the feature projection), so ``layer=2`` is the second block.
    """

    def __init__(self, model_path, device="cpu"):
        try:
            import torch
            from transformers import AutoFeatureExtractor, Wav2Vec2Model
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise ImportError("Wav2Vec2Backend needs the 'transformers' package") from exc
        path = Path(model_path)
        if not path.exists():
            raise FileNotFoundError(f"wav2vec 2.0 model directory not found: {path}")
        self._torch = torch
        self.device = device
        self.extractor = AutoFeatureExtractor.from_pretrained(str(path))
        self.model = Wav2Vec2Model.from_pretrained(str(path)).to(device).eval()
        self.dim = self.model.config.hidden_size

    def frame_embeddings(self, clip, layer=2):
        clip = resample(clip, 16000)
        inputs = self.extractor(clip.samples.astype(np.float32), sampling_rate=16000, return_tensors="pt")
        with self._torch.no_grad():
            out = self.model(inputs.input_values.to(self.device), output_hidden_states=True)
        return out.hidden_states[layer][0].cpu().numpy().astype(np.float64)


def embed(clip: AudioClip, backend, layer=2, pool="mean", source="", utt_id="") -> EmbeddingVector:
    """Pool frame embeddings from ``backend`` into one vector per utterance."""
    try:
        frames = np.asarray(backend.frame_embeddings(clip, layer), dtype=np.float64)
    except Exception as exc:
        raise EmbeddingError(f"embedding failed for utterance {utt_id!r}: {exc}") from exc
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise EmbeddingError(f"backend returned no frames for utterance {utt_id!r}")
    if pool == "mean":
        vec = frames.mean(axis=0)
    elif pool == "max":
        vec = frames.max(axis=0)
    else:
        raise ValueError(f"unknown pooling {pool!r}")
    return EmbeddingVector(vec, source, utt_id)


def pairwise_cosine(a, b) -> float:
    """Cosine distance ``1 - cos(a, b)`` in [0, 2]."""
    a = np.asarray(getattr(a, "values", a), dtype=np.float64)
    b = np.asarray(getattr(b, "values", b), dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for a zero vector")
    return float(np.clip(1.0 - np.dot(a, b) / (na * nb), 0.0, 2.0))


def distance_report(converted, whispered, normal, mode="matched"):
    """Mean cosine distance of each model's conversions to whispered and normal references.

    ``converted`` maps model name to ``{utt_id: vector}``; ``whispered`` and
    ``normal`` map ``utt_id`` to vectors.  ``mode="matched"`` compares each
    conversion with the references of the same utterance, ``"all_pairs"``
    with every reference.  Returns ``(summary, rows)`` where ``summary[model]``
    is ``{"to_whispered", "to_normal", "n"}``.
    """
    if mode not in ("matched", "all_pairs"):
        raise ValueError("mode must be 'matched' or 'all_pairs'")
    summary, rows = {}, []
    for model in sorted(converted):
        per = converted[model]
        to_w, to_n = [], []
        for utt in sorted(per):
            vec = per[utt]
            if mode == "matched":
                if utt not in whispered or utt not in normal:
                    continue
                dw = pairwise_cosine(vec, whispered[utt])
                dn = pairwise_cosine(vec, normal[utt])
            else:
                dw = float(np.mean([pairwise_cosine(vec, w) for w in whispered.values()]))
                dn = float(np.mean([pairwise_cosine(vec, n) for n in normal.values()]))
            to_w.append(dw)
            to_n.append(dn)
            rows.append({"model": model, "utt_id": utt, "to_whispered": dw, "to_normal": dn})
        summary[model] = {
            "to_whispered": float(np.mean(to_w)) if to_w else float("nan"),
            "to_normal": float(np.mean(to_n)) if to_n else float("nan"),
            "n": len(to_w),
        }
    return summary, rows


def project_2d(embeddings, perplexity=30.0, seed=0):
    """t-SNE layout of ``[n, dim]`` embeddings; needs more than ``3 * perplexity`` points."""
    from sklearn.manifold import TSNE

    x = np.asarray([getattr(e, "values", e) for e in embeddings], dtype=np.float64)
    if x.shape[0] <= 3 * perplexity:
        raise ValueError(
            f"t-SNE with perplexity {perplexity} needs more than {3 * perplexity:g} points, "
            f"got {x.shape[0]}; lower the perplexity or add utterances")
    tsne = TSNE(n_components=2, perplexity=perplexity, random_state=seed, init="pca",
                learning_rate="auto")
    return tsne.fit_transform(x)


def group_by_source(vectors):
    """Split a flat list into ``(converted_by_model, whispered, normal)`` dicts.

    Sources are ``"whispered"``, ``"normal"`` or ``"converted:<model>"``.
    """
    converted, whispered, normal = defaultdict(dict), {}, {}
    for v in vectors:
        if v.source == "whispered":
            whispered[v.utt_id] = v
        elif v.source == "normal":
            normal[v.utt_id] = v
        elif v.source.startswith("converted:"):
            converted[v.source.split(":", 1)[1]][v.utt_id] = v
        else:
            raise ValueError(f"unknown embedding source {v.source!r}")
    return dict(converted), whispered, normal


def write_embedding_cache(path, vectors):
    """Records of (utf-8 id, utf-8 source tag, dim, float32 values)."""
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<I", len(vectors)))
        for v in vectors:
            for text in (v.utt_id, v.source):
                raw = text.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(struct.pack("<I", v.values.size))
            fh.write(v.values.astype("<f4").tobytes())


def read_embedding_cache(path):
    raw = Path(path).read_bytes()
    if raw[:4] != EMB_MAGIC:
        raise ValueError(f"{path}: not an embedding cache")
    (count,) = struct.unpack_from("<I", raw, 4)
    off = 8
    out = []
    for _ in range(count):
        texts = []
        for _ in range(2):
            (n,) = struct.unpack_from("<I", raw, off)
            off += 4
            texts.append(raw[off:off + n].decode("utf-8"))
            off += n
        (dim,) = struct.unpack_from("<I", raw, off)
        off += 4
        vals = np.frombuffer(raw[off:off + 4 * dim], dtype="<f4").astype(np.float64)
        off += 4 * dim
        out.append(EmbeddingVector(vals, texts[1], texts[0]))
    return out


def write_distance_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["model", "utt_id", "to_whispered", "to_normal"])
        writer.writeheader()
        writer.writerows(rows)


def write_projection_csv(path, coords, vectors):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "source", "utt_id"])
        for (x, y), v in zip(coords, vectors):
            writer.writerow([f"{x:.6f}", f"{y:.6f}", v.source, v.utt_id])
