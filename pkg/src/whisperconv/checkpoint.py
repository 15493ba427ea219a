"""Versioned checkpoint container: config echo plus named parameter blobs."""
import os
import pickle
import struct
from pathlib import Path

import torch

from .estimators import SCMelGAN, SCVQVAE

FORMAT = "whisperconv-checkpoint"
_MODELS = {"sc-melgan": SCMelGAN, "sc-vqvae+gan": SCVQVAE, "sc-vqvae+wg": SCVQVAE}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, estimator):
    """Atomically write ``estimator`` (model, optimizer and RNG state) to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(estimator.checkpoint_state(), tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path):
    try:
        state = torch.load(str(path), map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, EOFError, ValueError, struct.error, pickle.UnpicklingError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(state, dict) or state.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if state.get("version") != 1:
        raise CheckpointError(f"unsupported checkpoint version {state.get('version')}")
    try:
        cls = _MODELS[state["model"]]
    except KeyError:
        raise CheckpointError(f"unknown model {state.get('model')!r} in {path}") from None
    return cls.from_checkpoint_state(state)
