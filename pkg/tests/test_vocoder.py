import numpy as np
import pytest
import torch

from conftest import tone
from whisperconv.preprocess import StftConfig, mel_from_samples
from whisperconv.vocoder import GriffinLimVocoder, TorchScriptVocoder

CFG = StftConfig()


def test_griffin_lim_length_and_range():
    mel = mel_from_samples(tone(440.0, 0.5).samples, CFG)
    wave = GriffinLimVocoder(CFG, n_iter=8)(mel)
    assert wave.size == CFG.hop_length * mel.shape[1]
    assert np.max(np.abs(wave)) <= 1.0


def test_griffin_lim_recovers_spectrum():
    x = tone(440.0, 0.5).samples
    mel = mel_from_samples(x, CFG)
    err = {}
    for n in (1, 32):
        rebuilt = mel_from_samples(GriffinLimVocoder(CFG, n_iter=n)(mel), CFG)[:, :mel.shape[1]]
        err[n] = np.mean(np.abs(rebuilt - mel))
    assert err[32] < err[1]
    # the loudest band survives resynthesis
    rebuilt = mel_from_samples(GriffinLimVocoder(CFG)(mel), CFG)
    assert np.argmax(rebuilt.mean(axis=1)) == np.argmax(mel.mean(axis=1))


def test_griffin_lim_deterministic():
    mel = mel_from_samples(tone(220.0, 0.3).samples, CFG)
    np.testing.assert_array_equal(GriffinLimVocoder(CFG, n_iter=4)(mel), GriffinLimVocoder(CFG, n_iter=4)(mel))


class Repeat(torch.nn.Module):
    def forward(self, mel):
        return mel.mean(dim=1).repeat_interleave(256, dim=-1) * 0.01


@pytest.mark.filterwarnings("ignore::DeprecationWarning")
def test_torchscript_vocoder_contract(tmp_path):
    path = tmp_path / "voc.pt"
    torch.jit.script(Repeat()).save(str(path))
    voc = TorchScriptVocoder(path, CFG)
    mel = np.random.default_rng(0).normal(size=(80, 7))
    wave = voc(mel)
    assert wave.shape == (256 * 7,)
    np.testing.assert_allclose(wave[:256], np.float32(mel[:, 0].mean()) * 0.01, rtol=1e-5)
