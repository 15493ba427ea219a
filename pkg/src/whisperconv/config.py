"""Run configuration: one YAML document of flat dotted keys, overridable from the command line."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import yaml

from .estimators import SCMelGAN, SCVQVAE
from .melgan import DiscriminatorConfig, GeneratorConfig
from .preprocess import StftConfig, VadConfig

WORKDIR_ENV = "WHISPERCONV_WORKDIR"
MODEL_NAMES = ("sc-melgan", "sc-vqvae+gan", "sc-vqvae+wg")

DEFAULTS = {
    "seed": 0,
    "paths.corpus_root": ".",
    "paths.manifest": "manifest.csv",
    "paths.workdir": "work",
    "stft.win_length": 1024,
    "stft.hop_length": 256,
    "stft.n_mels": 80,
    "stft.sample_rate": 22050,
    "stft.fft_size": 1024,
    "stft.fmin": 0.0,
    "stft.fmax": 11025.0,
    "stft.log_floor": 1e-5,
    "preprocess.target_peak": 0.95,
    "vad.frame_ms": 25.0,
    "vad.shift_ms": 10.0,
    "vad.threshold_db": 6.0,
    "vad.hangover_ms": 200.0,
    "split.test_speakers": [],
    "train.n_steps": 1000,
    "train.batch_size": 16,
    "train.segment_frames": 32,
    "train.learning_rate": 1e-4,
    "train.betas": [0.5, 0.9],
    "train.lambda_fm": 10.0,
    "train.checkpoint_every": 500,
    "generator.base_channels": 512,
    "generator.upsample_strides": [8, 8, 2, 2],
    "generator.leaky_slope": 0.2,
    "discriminator.base_channels": 16,
    "discriminator.max_channels": 1024,
    "vqvae.hidden_channels": 256,
    "vqvae.latent_dim": 64,
    "vqvae.n_codewords": 256,
    "vqvae.gamma": 0.25,
    "vqvae.loss_weighting": "half",
    "vqvae.kmeans_init": True,
    "vqvae.init_segments": 64,
    "vqvae.dead_code_restart": 1000,
    "vqvae.adversarial": True,
    "vqvae.adv_weight": 1.0,
}


class ConfigError(ValueError):
    pass


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def load_config(path=None, overrides=()):
    """Defaults, then the YAML file, then ``key=value`` overrides; unknown keys are rejected."""
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path} must hold a mapping of dotted keys")
        cfg.update(_checked(loaded))
    cfg.update(_checked(dict(parse_override(o) for o in overrides)))
    if os.environ.get(WORKDIR_ENV):
        cfg["paths.workdir"] = os.environ[WORKDIR_ENV]
    return RunConfig(cfg)


def _checked(mapping):
    unknown = sorted(set(mapping) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return mapping


class RunConfig:
    def __init__(self, values):
        self.values = dict(values)

    def __getitem__(self, key):
        return self.values[key]

    def section(self, prefix):
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def hash(self):
        blob = json.dumps(self.values, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def dump(self, path):
        Path(path).write_text(yaml.safe_dump(self.values, sort_keys=True))

    @property
    def workdir(self):
        return Path(self["paths.workdir"])

    def stft(self):
        return StftConfig(**self.section("stft"))

    def vad(self):
        return VadConfig(**self.section("vad"))

    def generator(self):
        g = self.section("generator")
        return GeneratorConfig(input_channels=self["stft.n_mels"], base_channels=g["base_channels"],
                               upsample_strides=tuple(g["upsample_strides"]), leaky_slope=g["leaky_slope"])

    def discriminator(self):
        d = self.section("discriminator")
        return DiscriminatorConfig(base_channels=d["base_channels"], max_channels=d["max_channels"])

    def estimator(self, model):
        """Untrained estimator for ``model`` built from this configuration."""
        if model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {model!r}; choose from {', '.join(MODEL_NAMES)}")
        t = self.section("train")
        common = dict(stft=self.stft(), learning_rate=t["learning_rate"], betas=tuple(t["betas"]),
                      segment_frames=t["segment_frames"], batch_size=t["batch_size"],
                      n_steps=t["n_steps"], seed=self["seed"], lambda_fm=t["lambda_fm"],
                      target_peak=self["preprocess.target_peak"])
        if model == "sc-melgan":
            return SCMelGAN(generator=self.generator(), discriminator=self.discriminator(), **common)
        v = self.section("vqvae")
        variant = "waveform_gan" if model == "sc-vqvae+gan" else "mel_conv"
        return SCVQVAE(decoder_variant=variant, generator=self.generator(),
                       discriminator=self.discriminator(), **v, **common)
