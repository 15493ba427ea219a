"""Estimator front-ends for the conversion models.

Both estimators are fitted on whispered mel-spectrograms ``X`` and the
time-aligned normal waveforms ``y`` produced by the alignment pipeline::

    model = SCMelGAN(n_steps=2000).fit(whisper_mels, aligned_normal_waves)
    waves = model.predict(whisper_mels)
"""
from __future__ import annotations

import dataclasses

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .audio import AudioClip
from .codebook import InitDataTooSmall, codebook_usage, kmeans_init
from .melgan import (DiscriminatorConfig, Generator, GeneratorConfig, MultiScaleDiscriminator,
                     train_step_melgan)
from .preprocess import MelSpectrogram, StftConfig, mel_from_samples, normalize_volume, resample
from .torchfeat import TorchMel
from .validation import check_mel_array, check_paired, check_wave_array
from .vqvae import VQVAE, VqVaeConfig, train_step_vqvae


def tiny_generator_config(**overrides):
    """Narrow generator for desk-scale experiments and tests."""
    return GeneratorConfig(**{"base_channels": 32, **overrides})


def tiny_discriminator_config(**overrides):
    return DiscriminatorConfig(**{"base_channels": 4, "max_channels": 64, **overrides})


def _config_dict(cfg):
    return None if cfg is None else dataclasses.asdict(cfg)


class _PairedEstimator(BaseEstimator):
    """Shared data handling, sampling and checkpoint plumbing."""

    model_name = "base"
    _config_params = {}

    def _stft(self):
        return self.stft or StftConfig()

    def _prepare(self, X, y):
        stft = self._stft()
        X, y = check_paired(X, y)
        data = []
        for mel, wave in zip(X, y):
            mel = check_mel_array(mel, stft.n_mels)
            n_frames = mel.shape[1]
            wave = check_wave_array(wave)
            target_len = n_frames * stft.hop_length
            wave_fit = np.pad(wave, (0, max(0, target_len - wave.size)))[:target_len]
            norm_mel = mel_from_samples(wave, stft)
            norm_mel = _fit_frames(norm_mel, n_frames, np.log(stft.log_floor))
            data.append((mel.astype(np.float32), wave_fit.astype(np.float32), norm_mel.astype(np.float32)))
        return data

    def _sample_batch(self, data):
        stft = self._stft()
        seg, hop = self.segment_frames, stft.hop_length
        floor = np.log(stft.log_floor)
        mels, waves, norms = [], [], []
        for _ in range(self.batch_size):
            k = int(self.rng_.integers(len(data)))
            mel, wave, norm = data[k]
            n = mel.shape[1]
            # crop around a uniformly drawn frame so edge frames are trained as often as interior ones
            centre = int(self.rng_.integers(n))
            start = min(max(0, centre - seg // 2), max(0, n - seg))
            mels.append(_fit_frames(mel[:, start:start + seg], seg, floor))
            norms.append(_fit_frames(norm[:, start:start + seg], seg, floor))
            w = wave[start * hop:(start + seg) * hop]
            waves.append(np.pad(w, (0, seg * hop - w.size)))
        to = lambda a: torch.from_numpy(np.stack(a)).float()
        return to(mels), to(waves).unsqueeze(1), to(norms)

    def _seed_everything(self):
        torch.manual_seed(self.seed)
        self.rng_ = np.random.default_rng(self.seed)

    def fit(self, X, y, callback=None):
        """Train until ``n_steps`` total steps; ``warm_start`` continues a fitted model."""
        data = self._prepare(X, y)
        if not (self.warm_start and hasattr(self, "step_")):
            self._seed_everything()
            self._build()
            self._initialize(data)
            self.step_ = 0
            self.history_ = []
        while self.step_ < self.n_steps:
            record = self._train_step(self._sample_batch(data))
            self.step_ += 1
            record = {"step": self.step_, **record}
            self.history_.append(record)
            if callback is not None:
                callback(self, record)
        return self

    def _initialize(self, data):
        pass

    # checkpoint payload --------------------------------------------------
    def _modules(self):
        raise NotImplementedError

    def _optimizers(self):
        raise NotImplementedError

    def _serializable_params(self):
        params = self.get_params(deep=False)
        for name in self._config_params:
            params[name] = _config_dict(params[name])
        if params.get("betas") is not None:
            params["betas"] = list(params["betas"])
        return params

    @classmethod
    def _restore_params(cls, params):
        params = dict(params)
        for name, klass in cls._config_params.items():
            if params.get(name) is not None:
                params[name] = klass(**params[name])
        if params.get("betas") is not None:
            params["betas"] = tuple(params["betas"])
        return params

    def checkpoint_state(self):
        check_is_fitted(self, "step_")
        return {
            "format": "whisperconv-checkpoint",
            "version": 1,
            "model": self.model_name,
            "params": self._serializable_params(),
            "step": self.step_,
            "modules": {k: m.state_dict() for k, m in self._modules().items()},
            "optimizers": {k: o.state_dict() for k, o in self._optimizers().items()},
            "numpy_rng": self.rng_.bit_generator.state,
            "torch_rng": torch.get_rng_state(),
            "extra": self._extra_state(),
        }

    def _extra_state(self):
        return {}

    def _load_extra_state(self, extra):
        pass

    @classmethod
    def from_checkpoint_state(cls, state):
        est = cls(**cls._restore_params(state["params"]))
        est._build()
        for name, module in est._modules().items():
            module.load_state_dict(state["modules"][name])
        for name, opt in est._optimizers().items():
            opt.load_state_dict(state["optimizers"][name])
        est.rng_ = np.random.default_rng()
        est.rng_.bit_generator.state = state["numpy_rng"]
        torch.set_rng_state(state["torch_rng"])
        est.step_ = int(state["step"])
        est.history_ = []
        est._load_extra_state(state.get("extra", {}))
        return est

    # inference -------------------------------------------------------------
    def whisper_features(self, clip: AudioClip) -> MelSpectrogram:
        """Conversion-time front end: resample, peak-normalize, log-mel (no trimming)."""
        stft = self._stft()
        clip = normalize_volume(resample(clip, stft.sample_rate), self.target_peak)
        return MelSpectrogram(mel_from_samples(clip.samples, stft), stft)

    def convert(self, clip: AudioClip) -> AudioClip:
        """Whispered clip in, converted clip out (``hop * n_frames`` samples)."""
        wave = self.predict([self.whisper_features(clip)])[0]
        return AudioClip(np.clip(wave, -1.0, 1.0), self._stft().sample_rate)


def _fit_frames(mel, n, fill):
    if mel.shape[1] >= n:
        return mel[:, :n]
    return np.pad(mel, ((0, 0), (0, n - mel.shape[1])), constant_values=fill)


class SCMelGAN(_PairedEstimator):
    """Whisper-conditioned MelGAN trained with hinge and feature-matching losses.

    Parameters
    ----------
    generator, discriminator : GeneratorConfig, DiscriminatorConfig, optional
        Architecture; defaults are the full-width models.
    lambda_fm : float
        Weight of the feature-matching term in the generator objective.
    segment_frames : int
        Training crop length in mel frames (``hop`` samples each).
    n_steps : int
        Total number of discriminator/generator update pairs.
    """

    model_name = "sc-melgan"
    _config_params = {"stft": StftConfig, "generator": GeneratorConfig, "discriminator": DiscriminatorConfig}

    def __init__(self, stft=None, generator=None, discriminator=None, lambda_fm=10.0,
                 learning_rate=1e-4, betas=(0.5, 0.9), segment_frames=32, batch_size=16,
                 n_steps=1000, seed=0, target_peak=0.95, warm_start=False):
        self.stft = stft
        self.generator = generator
        self.discriminator = discriminator
        self.lambda_fm = lambda_fm
        self.learning_rate = learning_rate
        self.betas = betas
        self.segment_frames = segment_frames
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.seed = seed
        self.target_peak = target_peak
        self.warm_start = warm_start

    def _build(self):
        gcfg = self.generator or GeneratorConfig(input_channels=self._stft().n_mels)
        if gcfg.upsample_factor != self._stft().hop_length:
            raise ValueError(
                f"generator upsamples by {gcfg.upsample_factor} but hop_length is {self._stft().hop_length}")
        self.generator_ = Generator(gcfg)
        self.discriminator_ = MultiScaleDiscriminator(self.discriminator or DiscriminatorConfig())
        self.opt_g_ = torch.optim.Adam(self.generator_.parameters(), lr=self.learning_rate, betas=self.betas)
        self.opt_d_ = torch.optim.Adam(self.discriminator_.parameters(), lr=self.learning_rate, betas=self.betas)

    def _modules(self):
        return {"generator": self.generator_, "discriminator": self.discriminator_}

    def _optimizers(self):
        return {"generator": self.opt_g_, "discriminator": self.opt_d_}

    def _train_step(self, batch):
        mel_w, wave_n, _ = batch
        return train_step_melgan(self.generator_, self.discriminator_, self.opt_g_, self.opt_d_,
                                 mel_w, wave_n, self.lambda_fm)

    def predict(self, X):
        """Waveforms (``hop * n_frames`` samples each) for whispered mels ``X``."""
        check_is_fitted(self, "generator_")
        n_mels = self._stft().n_mels
        out = []
        self.generator_.eval()
        with torch.no_grad():
            for mel in X:
                m = torch.from_numpy(check_mel_array(mel, n_mels)).float()[None]
                out.append(self.generator_(m)[0, 0].double().numpy())
        self.generator_.train()
        return out


class SCVQVAE(_PairedEstimator):
    """VQ-VAE mapping whispered mels to normal mels (``mel_conv``) or audio (``waveform_gan``).

    The codebook is initialized by K-means over encoder outputs before
    training.  ``mel_conv`` outputs are synthesized with ``vocoder`` at
    conversion time; ``waveform_gan`` decodes straight to audio through a
    MelGAN generator and optionally trains against a multi-scale
    discriminator.
    """

    _config_params = {"stft": StftConfig, "generator": GeneratorConfig, "discriminator": DiscriminatorConfig}

    def __init__(self, stft=None, decoder_variant="mel_conv", hidden_channels=256, latent_dim=64,
                 n_codewords=256, gamma=0.25, loss_weighting="half", kmeans_init=True,
                 init_segments=64, dead_code_restart=1000, generator=None, discriminator=None,
                 adversarial=True, lambda_fm=10.0, adv_weight=1.0, adv_through_encoder=False,
                 learning_rate=1e-4,
                 betas=(0.5, 0.9), segment_frames=32, batch_size=16, n_steps=1000, seed=0,
                 target_peak=0.95, vocoder=None, warm_start=False):
        self.stft = stft
        self.decoder_variant = decoder_variant
        self.hidden_channels = hidden_channels
        self.latent_dim = latent_dim
        self.n_codewords = n_codewords
        self.gamma = gamma
        self.loss_weighting = loss_weighting
        self.kmeans_init = kmeans_init
        self.init_segments = init_segments
        self.dead_code_restart = dead_code_restart
        self.generator = generator
        self.discriminator = discriminator
        self.adversarial = adversarial
        self.lambda_fm = lambda_fm
        self.adv_weight = adv_weight
        self.adv_through_encoder = adv_through_encoder
        self.learning_rate = learning_rate
        self.betas = betas
        self.segment_frames = segment_frames
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.seed = seed
        self.target_peak = target_peak
        self.vocoder = vocoder
        self.warm_start = warm_start

    @property
    def model_name(self):
        return "sc-vqvae+gan" if self.decoder_variant == "waveform_gan" else "sc-vqvae+wg"

    def _serializable_params(self):
        params = super()._serializable_params()
        params.pop("vocoder", None)
        return params

    def vq_config(self):
        return VqVaeConfig(n_mels=self._stft().n_mels, hidden_channels=self.hidden_channels,
                           latent_dim=self.latent_dim, n_codewords=self.n_codewords, gamma=self.gamma,
                           decoder_variant=self.decoder_variant, loss_weighting=self.loss_weighting)

    def _build(self):
        stft = self._stft()
        gcfg = None
        if self.decoder_variant == "waveform_gan":
            gcfg = self.generator or GeneratorConfig(input_channels=stft.n_mels)
            if gcfg.upsample_factor != stft.hop_length:
                raise ValueError("generator upsampling must equal hop_length")
        self.model_ = VQVAE(self.vq_config(), gcfg)
        self.opt_ = torch.optim.Adam(self.model_.parameters(), lr=self.learning_rate, betas=self.betas)
        self.discriminator_ = None
        self.opt_d_ = None
        self.mel_fn_ = None
        if self.decoder_variant == "waveform_gan":
            self.mel_fn_ = TorchMel(stft)
            if self.adversarial:
                self.discriminator_ = MultiScaleDiscriminator(self.discriminator or DiscriminatorConfig())
                self.opt_d_ = torch.optim.Adam(self.discriminator_.parameters(), lr=self.learning_rate,
                                               betas=self.betas)
        self.idle_steps_ = np.zeros(self.n_codewords, dtype=np.int64)

    def _modules(self):
        mods = {"vqvae": self.model_}
        if self.discriminator_ is not None:
            mods["discriminator"] = self.discriminator_
        return mods

    def _optimizers(self):
        opts = {"vqvae": self.opt_}
        if self.opt_d_ is not None:
            opts["discriminator"] = self.opt_d_
        return opts

    def _extra_state(self):
        return {"idle_steps": self.idle_steps_.tolist()}

    def _load_extra_state(self, extra):
        if "idle_steps" in extra:
            self.idle_steps_ = np.asarray(extra["idle_steps"], dtype=np.int64)

    def _initialize(self, data):
        if not self.kmeans_init:
            return
        latents = []
        with torch.no_grad():
            for _ in range(max(1, self.init_segments // self.batch_size)):
                mel_w, _, _ = self._sample_batch(data)
                z = self.model_.encode(mel_w)
                latents.append(z.permute(0, 2, 1).reshape(-1, z.shape[1]).numpy())
        latents = np.concatenate(latents)
        if latents.shape[0] < self.n_codewords:
            raise InitDataTooSmall(
                f"{latents.shape[0]} encoder outputs for {self.n_codewords} codewords; "
                "raise init_segments or segment_frames")
        cb = kmeans_init(latents, self.n_codewords, seed=self.seed)
        with torch.no_grad():
            self.model_.quantizer.codebook.copy_(torch.from_numpy(cb).float())
        self.init_latents_ = latents

    def _train_step(self, batch):
        mel_w, wave_n, mel_n = batch
        record, q = train_step_vqvae(
            self.model_, self.opt_, mel_w, mel_n, self.gamma, self.loss_weighting,
            mel_fn=self.mel_fn_, disc=self.discriminator_, opt_d=self.opt_d_, x_norm=wave_n,
            lambda_fm=self.lambda_fm, adv_weight=self.adv_weight,
            adv_through_encoder=self.adv_through_encoder)
        self._track_usage(q)
        return record

    def _track_usage(self, q):
        used = np.zeros(self.n_codewords, dtype=bool)
        idx = q.indices.reshape(-1).numpy()
        used[idx] = True
        self.idle_steps_[used] = 0
        self.idle_steps_[~used] += 1
        _, self.last_perplexity_ = codebook_usage(idx, self.n_codewords)
        if not self.dead_code_restart:
            return
        dead = np.flatnonzero(self.idle_steps_ >= self.dead_code_restart)
        if dead.size == 0:
            return
        z = q.latents.permute(0, 2, 1).reshape(-1, q.latents.shape[1])
        pick = torch.from_numpy(self.rng_.integers(z.shape[0], size=dead.size))
        with torch.no_grad():
            self.model_.quantizer.codebook[torch.from_numpy(dead)] = z[pick]
        self.idle_steps_[dead] = 0

    def encode_indices(self, X):
        """Codeword ids per utterance."""
        check_is_fitted(self, "model_")
        out = []
        with torch.no_grad():
            for mel in X:
                m = torch.from_numpy(check_mel_array(mel, self._stft().n_mels)).float()[None]
                out.append(self.model_.quantize(self.model_.encode(m)).indices[0].numpy())
        return out

    transform = encode_indices

    def predict(self, X):
        """Normal-speech mels (``mel_conv``) or waveforms (``waveform_gan``) for whispered mels."""
        check_is_fitted(self, "model_")
        out = []
        n_mels = self._stft().n_mels
        self.model_.eval()
        with torch.no_grad():
            for mel in X:
                mel = check_mel_array(mel, n_mels)
                y, _ = self.model_(torch.from_numpy(mel).float()[None])
                y = y[0].double().numpy()
                if self.decoder_variant == "mel_conv":
                    y = y[:, :mel.shape[1]]
                else:
                    # odd frame counts decode one extra hop; trim to the input duration
                    y = y[0, :mel.shape[1] * self._stft().hop_length]
                out.append(y)
        self.model_.train()
        return out

    def convert(self, clip: AudioClip) -> AudioClip:
        out = self.predict([self.whisper_features(clip)])[0]
        if self.decoder_variant == "mel_conv":
            from .vocoder import GriffinLimVocoder

            vocoder = self.vocoder or GriffinLimVocoder(self._stft())
            out = vocoder(out)
        return AudioClip(np.clip(out, -1.0, 1.0), self._stft().sample_rate)
