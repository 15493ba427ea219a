"""VQ-VAE that encodes whispered mels and reconstructs the normal-speech target."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .melgan import (Generator, GeneratorConfig, NonFiniteLossError, adversarial_terms,
                     check_finite, discriminator_step)

DECODER_VARIANTS = ("mel_conv", "waveform_gan")


@dataclass(frozen=True)
class VqVaeConfig:
    n_mels: int = 80
    hidden_channels: int = 256
    latent_dim: int = 64
    n_codewords: int = 256
    gamma: float = 0.25
    decoder_variant: str = "mel_conv"
    loss_weighting: str = "half"  # "half": 0.5 / 0.5, "unit": 1 / 1
    n_residual: int = 3

    def __post_init__(self):
        if self.decoder_variant not in DECODER_VARIANTS:
            raise ValueError(f"decoder_variant must be one of {DECODER_VARIANTS}")
        if self.loss_weighting not in ("half", "unit"):
            raise ValueError("loss_weighting must be 'half' or 'unit'")

    def to_dict(self):
        return asdict(self)


class ResidualUnit(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv3 = nn.Conv1d(channels, channels, 3, padding=1, padding_mode="replicate")
        self.conv1 = nn.Conv1d(channels, channels, 1)

    def forward(self, x):
        return x + self.conv1(F.relu(self.conv3(F.relu(x))))


class Encoder(nn.Module):
    """Five convolutions (kernels 3, 3, 4, 3, 3; stride 2 at the third) and a residual stack.

    Output length is ``ceil(n_frames / 2)``.
    """

    def __init__(self, cfg: VqVaeConfig):
        super().__init__()
        h, d = cfg.hidden_channels, cfg.latent_dim
        self.n_mels = cfg.n_mels
        self.conv1 = nn.Conv1d(cfg.n_mels, h, 3, padding=1, padding_mode="replicate")
        self.conv2 = nn.Conv1d(h, h, 3, padding=1, padding_mode="replicate")
        self.conv3 = nn.Conv1d(h, h, 4, stride=2)
        self.conv4 = nn.Conv1d(h, h, 3, padding=1, padding_mode="replicate")
        self.conv5 = nn.Conv1d(h, d, 3, padding=1, padding_mode="replicate")
        self.residual = nn.Sequential(*[ResidualUnit(d) for _ in range(cfg.n_residual)])

    def forward(self, mel):
        if mel.dim() != 3 or mel.shape[1] != self.n_mels:
            raise ValueError(f"expected [B, {self.n_mels}, F] input, got {tuple(mel.shape)}")
        x = F.relu(self.conv1(mel))
        x = F.relu(self.conv2(x))
        x = F.relu(self.conv3(F.pad(x, (1, 2), mode="replicate")))
        x = F.relu(self.conv4(x))
        return self.residual(self.conv5(x))


class MelDecoder(nn.Module):
    """Convolution, residual stack, three kernel-3 transposed convolutions (first one x2)."""

    def __init__(self, cfg: VqVaeConfig):
        super().__init__()
        h = cfg.hidden_channels
        self.conv = nn.Conv1d(cfg.latent_dim, h, 3, padding=1, padding_mode="replicate")
        self.residual = nn.Sequential(*[ResidualUnit(h) for _ in range(cfg.n_residual)])
        self.up1 = nn.ConvTranspose1d(h, h, 3, stride=2, padding=1, output_padding=1)
        self.up2 = nn.ConvTranspose1d(h, h, 3, stride=1, padding=1)
        self.up3 = nn.ConvTranspose1d(h, cfg.n_mels, 3, stride=1, padding=1)

    def forward(self, z):
        x = self.residual(self.conv(z))
        x = F.relu(self.up1(F.relu(x)))
        x = F.relu(self.up2(x))
        return self.up3(x)


class WaveformDecoder(nn.Module):
    """x2 latent upsampler feeding a MelGAN generator stack."""

    def __init__(self, cfg: VqVaeConfig, gen_cfg: GeneratorConfig):
        super().__init__()
        self.up = nn.ConvTranspose1d(cfg.latent_dim, gen_cfg.input_channels, 4, stride=2, padding=1)
        self.generator = Generator(gen_cfg)

    def forward(self, z):
        return self.generator(F.leaky_relu(self.up(z), 0.2))


@dataclass
class QuantizerOutput:
    indices: torch.Tensor        # [B, L]
    quantized: torch.Tensor      # [B, d, L], exact codewords
    quantized_st: torch.Tensor   # same values, gradient routed to z_e
    codebook_loss: torch.Tensor
    commitment_loss: torch.Tensor
    latents: torch.Tensor | None = None  # detached z_e


class _StraightThrough(torch.autograd.Function):
    @staticmethod
    def forward(ctx, z_e, e):
        return e.clone()

    @staticmethod
    def backward(ctx, grad):
        return grad, None


def nearest_indices(z_flat, codebook, chunk=4096):
    """Argmin of explicit squared differences; first index wins ties."""
    out = []
    for s in range(0, z_flat.shape[0], chunk):
        diff = z_flat[s:s + chunk, None, :] - codebook[None, :, :]
        out.append((diff * diff).sum(-1).argmin(dim=1))
    return torch.cat(out) if out else torch.zeros(0, dtype=torch.long)


class VectorQuantizer(nn.Module):
    def __init__(self, n_codewords=256, dim=64):
        super().__init__()
        self.codebook = nn.Parameter(torch.randn(n_codewords, dim) / np.sqrt(dim))

    @property
    def n_codewords(self):
        return self.codebook.shape[0]

    def forward(self, z_e) -> QuantizerOutput:
        b, d, length = z_e.shape
        if d != self.codebook.shape[1]:
            raise ValueError(f"latent dim {d} != codeword dim {self.codebook.shape[1]}")
        z_flat = z_e.permute(0, 2, 1).reshape(-1, d)
        with torch.no_grad():
            idx = nearest_indices(z_flat.detach(), self.codebook.detach())
        e_flat = self.codebook[idx]
        e = e_flat.reshape(b, length, d).permute(0, 2, 1)
        codebook_loss = F.mse_loss(e, z_e.detach())
        commitment_loss = F.mse_loss(z_e, e.detach())
        quantized_st = _StraightThrough.apply(z_e, e.detach())
        return QuantizerOutput(idx.reshape(b, length), e.detach(), quantized_st,
                               codebook_loss, commitment_loss, z_e.detach())


def vqvae_loss(recon, target, q: QuantizerOutput, gamma=0.25, weighting="half"):
    """Reconstruction l1 to the normal mel plus codebook and commitment terms.

    Returns ``(total, components)``; frames beyond the shorter input are cropped.
    """
    n = min(recon.shape[-1], target.shape[-1])
    rec = (recon[..., :n] - target[..., :n]).abs().mean()
    vq = q.codebook_loss + gamma * q.commitment_loss
    w_rec, w_vq = (0.5, 0.5) if weighting == "half" else (1.0, 1.0)
    total = w_rec * rec + w_vq * vq
    if not torch.isfinite(total):
        raise NonFiniteLossError(f"vq-vae loss became non-finite ({total.item()})")
    return total, {
        "recon": rec.item(),
        "codebook": q.codebook_loss.item(),
        "commitment": q.commitment_loss.item(),
        "vq_loss": total.item(),
    }


class VQVAE(nn.Module):
    def __init__(self, cfg: VqVaeConfig = VqVaeConfig(), gen_cfg: GeneratorConfig | None = None):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.quantizer = VectorQuantizer(cfg.n_codewords, cfg.latent_dim)
        if cfg.decoder_variant == "mel_conv":
            self.decoder = MelDecoder(cfg)
        else:
            self.decoder = WaveformDecoder(cfg, gen_cfg or GeneratorConfig(input_channels=cfg.n_mels))

    def encode(self, mel):
        return self.encoder(mel)

    def quantize(self, z_e) -> QuantizerOutput:
        return self.quantizer(z_e)

    def decode(self, z):
        return self.decoder(z)

    def forward(self, mel):
        z_e = self.encode(mel)
        q = self.quantize(z_e)
        return self.decode(q.quantized_st), q


def train_step_vqvae(model, opt, s_whsp, s_norm, gamma=0.25, weighting="half",
                     mel_fn=None, disc=None, opt_d=None, x_norm=None,
                     lambda_fm=10.0, adv_weight=1.0, adv_through_encoder=False):
    """One gradient step of the VQ-VAE objective.

    For the ``waveform_gan`` variant ``mel_fn`` maps generated audio back to
    log-mel for the reconstruction term, and when ``disc`` is given the
    discriminator is updated first and adversarial/feature-matching terms
    against ``x_norm`` are added to the generator-side loss.  Unless
    ``adv_through_encoder`` is set, those adversarial gradients update the
    decoder only; routed through the straight-through estimator they push
    encoder outputs away from every codeword.
    """
    if s_whsp.shape[-1] == 0:
        raise ValueError("zero-length training segment")
    z_e = model.encode(s_whsp)
    q = model.quantize(z_e)
    out = model.decode(q.quantized_st)
    record = {}
    if model.cfg.decoder_variant == "waveform_gan":
        if mel_fn is None:
            raise ValueError("waveform variant needs mel_fn for the reconstruction term")
        wave = out
        recon = mel_fn(wave)
        if disc is not None:
            record["d_loss"] = discriminator_step(disc, opt_d, x_norm, wave).item()
    else:
        recon = out
    loss, comps = vqvae_loss(recon, s_norm, q, gamma, weighting)
    record.update(comps)
    adv = None
    if model.cfg.decoder_variant == "waveform_gan" and disc is not None:
        g_adv, fm = adversarial_terms(disc, x_norm, wave)
        adv = adv_weight * (g_adv + lambda_fm * fm)
        record["g_adv"] = g_adv.item()
        record["fm"] = fm.item()
    record["loss"] = loss.item() + (adv.item() if adv is not None else 0.0)
    record = check_finite(record)
    opt.zero_grad(set_to_none=True)
    if adv is not None and not adv_through_encoder:
        adv.backward(retain_graph=True)
        for p in model.encoder.parameters():
            p.grad = None
    elif adv is not None:
        loss = loss + adv
    loss.backward()
    opt.step()
    return record, q
