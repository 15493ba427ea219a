"""Whisper-conditioned MelGAN: generator, multi-scale discriminator and hinge objectives.

The generator only ever sees whispered mel-spectrograms; normal speech enters
training exclusively as the discriminator's real waveform.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.parametrizations import weight_norm


class NonFiniteLossError(FloatingPointError):
    """A training loss became NaN or infinite."""


@dataclass(frozen=True)
class GeneratorConfig:
    upsample_strides: Sequence[int] = (8, 8, 2, 2)
    residual_blocks_per_stage: int = 3
    residual_kernel: int = 3
    dilations: Sequence[int] = (1, 3, 9)
    input_channels: int = 80
    base_channels: int = 512
    leaky_slope: float = 0.2
    weight_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "upsample_strides", tuple(int(s) for s in self.upsample_strides))
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if len(self.dilations) != self.residual_blocks_per_stage:
            raise ValueError("need one dilation per residual block")

    @property
    def upsample_factor(self) -> int:
        return int(np.prod(self.upsample_strides))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DiscriminatorConfig:
    n_scales: int = 3
    pool_kernel: int = 4
    base_channels: int = 16
    max_channels: int = 1024
    input_kernel: int = 15
    mid_kernel: int = 41
    mid_stride: int = 4
    n_mid: int = 4
    final_kernels: Sequence[int] = (5, 3)
    leaky_slope: float = 0.2
    weight_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "final_kernels", tuple(int(k) for k in self.final_kernels))

    def to_dict(self):
        return asdict(self)


def _wn(module, enabled):
    return weight_norm(module) if enabled else module


class ResidualBlock(nn.Module):
    def __init__(self, channels, kernel, dilation, slope, use_wn):
        super().__init__()
        pad = dilation * (kernel - 1) // 2
        self.slope = slope
        self.conv = _wn(nn.Conv1d(channels, channels, kernel, dilation=dilation,
                                  padding=pad, padding_mode="replicate"), use_wn)
        self.proj = _wn(nn.Conv1d(channels, channels, 1), use_wn)
        self.shortcut = _wn(nn.Conv1d(channels, channels, 1), use_wn)

    def forward(self, x):
        h = self.conv(F.leaky_relu(x, self.slope))
        h = self.proj(F.leaky_relu(h, self.slope))
        return self.shortcut(x) + h


class Generator(nn.Module):
    """Mel ``[B, n_mels, F]`` to waveform ``[B, 1, F * prod(strides)]`` in [-1, 1]."""

    def __init__(self, cfg: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        self.cfg = cfg
        wn = cfg.weight_norm
        ch = cfg.base_channels
        self.input_conv = _wn(nn.Conv1d(cfg.input_channels, ch, 7, padding=3, padding_mode="replicate"), wn)
        self.stages = nn.ModuleList()
        for r in cfg.upsample_strides:
            out = max(1, ch // 2)
            up = _wn(nn.ConvTranspose1d(ch, out, 2 * r, stride=r, padding=r // 2 + r % 2,
                                        output_padding=r % 2), wn)
            blocks = [ResidualBlock(out, cfg.residual_kernel, d, cfg.leaky_slope, wn) for d in cfg.dilations]
            self.stages.append(nn.ModuleDict({"up": up, "res": nn.Sequential(*blocks)}))
            ch = out
        self.output_conv = _wn(nn.Conv1d(ch, 1, 7, padding=3, padding_mode="replicate"), wn)

    def forward(self, mel):
        if mel.dim() != 3 or mel.shape[1] != self.cfg.input_channels:
            raise ValueError(f"expected [B, {self.cfg.input_channels}, F] input, got {tuple(mel.shape)}")
        x = self.input_conv(mel)
        for stage in self.stages:
            x = stage["up"](F.leaky_relu(x, self.cfg.leaky_slope))
            x = stage["res"](x)
        return torch.tanh(self.output_conv(F.leaky_relu(x, self.cfg.leaky_slope)))

    def zero_output_layer(self):
        with torch.no_grad():
            conv = self.output_conv
            if hasattr(conv, "parametrizations"):
                conv.parametrizations.weight.original0.zero_()
            else:
                conv.weight.zero_()
            conv.bias.zero_()


class ScaleDiscriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        wn = cfg.weight_norm
        ch = cfg.base_channels
        layers = [_wn(nn.Conv1d(1, ch, cfg.input_kernel, padding=cfg.input_kernel // 2), wn)]
        for _ in range(cfg.n_mid):
            out = min(ch * cfg.mid_stride, cfg.max_channels)
            groups = max(1, ch // 4)
            while out % groups:
                groups -= 1
            layers.append(_wn(nn.Conv1d(ch, out, cfg.mid_kernel, stride=cfg.mid_stride,
                                        padding=cfg.mid_kernel // 2, groups=groups), wn))
            ch = out
        k1, k2 = cfg.final_kernels
        out = min(ch * 2, cfg.max_channels)
        layers.append(_wn(nn.Conv1d(ch, out, k1, padding=k1 // 2), wn))
        layers.append(_wn(nn.Conv1d(out, 1, k2, padding=k2 // 2), wn))
        self.layers = nn.ModuleList(layers)
        self.slope = cfg.leaky_slope

    def forward(self, x):
        feats = []
        for layer in self.layers[:-1]:
            x = F.leaky_relu(layer(x), self.slope)
            feats.append(x)
        return self.layers[-1](x), feats


@dataclass
class DiscriminatorOutput:
    """Per-scale logits ``D_k`` and intermediate feature maps ``D_k^(i)``."""

    logits: List[torch.Tensor]
    features: List[List[torch.Tensor]] = field(default_factory=list)

    @property
    def n_scales(self):
        return len(self.logits)

    @property
    def n_layers(self):
        return len(self.features[0]) if self.features else 0


class MultiScaleDiscriminator(nn.Module):
    """Identical blocks on the raw waveform and on 2x / 4x average-pooled copies."""

    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.cfg = cfg
        self.blocks = nn.ModuleList(ScaleDiscriminator(cfg) for _ in range(cfg.n_scales))
        self.pool = nn.AvgPool1d(cfg.pool_kernel, stride=2, padding=cfg.pool_kernel // 4,
                                 count_include_pad=False, ceil_mode=True)

    def scaled_inputs(self, x):
        if x.dim() == 2:
            x = x.unsqueeze(1)
        out = []
        for k in range(self.cfg.n_scales):
            out.append(x)
            if k + 1 < self.cfg.n_scales:
                x = self.pool(x)
        return out

    def forward(self, x) -> DiscriminatorOutput:
        logits, feats = [], []
        for block, xs in zip(self.blocks, self.scaled_inputs(x)):
            lg, fm = block(xs)
            logits.append(lg)
            feats.append(fm)
        return DiscriminatorOutput(logits, feats)


def discriminator_loss(real: DiscriminatorOutput, fake: DiscriminatorOutput):
    """Hinge objective: normal audio pushed above +1, generated audio below -1, per scale."""
    if real.n_scales != fake.n_scales:
        raise ValueError("real and fake outputs have different scale counts")
    total = 0.0
    for lr, lf in zip(real.logits, fake.logits):
        total = total + F.relu(1.0 - lr).mean() + F.relu(1.0 + lf).mean()
    return total


def generator_adv_loss(fake: DiscriminatorOutput):
    return sum((-lf).mean() for lf in fake.logits)


def feature_matching_loss(real: DiscriminatorOutput, fake: DiscriminatorOutput):
    """Sum over scales and layers of the mean absolute feature difference."""
    if real.n_scales != fake.n_scales or real.n_layers != fake.n_layers:
        raise ValueError("real and fake outputs have different structure")
    total = 0.0
    for fr_scale, ff_scale in zip(real.features, fake.features):
        for fr, ff in zip(fr_scale, ff_scale):
            if fr.shape != ff.shape:
                raise ValueError(f"feature map shape mismatch {tuple(fr.shape)} vs {tuple(ff.shape)}")
            total = total + (fr - ff).abs().mean()
    return total


def crop_to_common(*waves):
    n = min(w.shape[-1] for w in waves)
    return [w[..., :n] for w in waves]


def check_finite(record):
    for name, value in record.items():
        if not np.isfinite(value):
            raise NonFiniteLossError(f"{name} became non-finite ({value})")
    return record


def discriminator_step(disc, opt_d, x_norm, fake):
    x_norm, fake = crop_to_common(x_norm, fake)
    d_loss = discriminator_loss(disc(x_norm), disc(fake.detach()))
    if not torch.isfinite(d_loss):
        raise NonFiniteLossError(f"d_loss became non-finite ({d_loss.item()})")
    opt_d.zero_grad(set_to_none=True)
    d_loss.backward()
    opt_d.step()
    return d_loss


def adversarial_terms(disc, x_norm, fake):
    """Generator-side adversarial loss and feature matching against normal audio."""
    x_norm, fake = crop_to_common(x_norm, fake)
    fake_out = disc(fake)
    with torch.no_grad():
        real_out = disc(x_norm)
    return generator_adv_loss(fake_out), feature_matching_loss(real_out, fake_out)


def train_step_melgan(gen, disc, opt_g, opt_d, s_whsp, x_norm, lambda_fm=10.0):
    """One discriminator update followed by one generator update.

    ``s_whsp`` is the whispered mel batch ``[B, n_mels, F]`` and ``x_norm`` the
    time-aligned normal waveform batch ``[B, 1, F * hop]``.
    """
    if s_whsp.shape[-1] == 0 or x_norm.shape[-1] == 0:
        raise ValueError("zero-length training segment")
    if x_norm.dim() == 2:
        x_norm = x_norm.unsqueeze(1)
    fake = gen(s_whsp)
    d_loss = discriminator_step(disc, opt_d, x_norm, fake)

    g_adv, fm = adversarial_terms(disc, x_norm, fake)
    g_loss = g_adv + lambda_fm * fm
    if not torch.isfinite(g_loss):
        raise NonFiniteLossError(f"g_loss became non-finite ({g_loss.item()})")
    opt_g.zero_grad(set_to_none=True)
    g_loss.backward()
    opt_g.step()
    return check_finite({
        "d_loss": d_loss.item(),
        "g_adv": g_adv.item(),
        "fm": fm.item(),
        "g_loss": g_loss.item(),
    })
