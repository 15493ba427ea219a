"""Differentiable log-mel analysis matching :func:`whisperconv.preprocess.mel_spectrogram`."""
import torch
from torch import nn

from .preprocess import StftConfig


class TorchMel(nn.Module):
    def __init__(self, config: StftConfig = StftConfig()):
        super().__init__()
        self.config = config
        win = torch.hann_window(config.win_length, periodic=True, dtype=torch.float64)
        self.register_buffer("window", win.float(), persistent=False)
        fb = torch.as_tensor(config.filterbank())
        self.register_buffer("filterbank", fb.float(), persistent=False)

    def forward(self, wave):
        """``[B, T]`` or ``[B, 1, T]`` waveform to ``[B, n_mels, T // hop + 1]`` log-mel."""
        if wave.dim() == 3:
            wave = wave.squeeze(1)
        c = self.config
        spec = torch.stft(wave, c.fft_size, hop_length=c.hop_length, win_length=c.win_length,
                          window=self.window.to(wave.dtype), center=True, pad_mode="reflect",
                          return_complex=True)
        mag = torch.sqrt(spec.real ** 2 + spec.imag ** 2 + 1e-12)
        mel = torch.matmul(self.filterbank.to(wave.dtype), mag)
        return torch.log(torch.clamp(mel, min=c.log_floor))
