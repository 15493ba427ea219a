import pytest

from whisperconv.config import DEFAULTS, WORKDIR_ENV, ConfigError, load_config, parse_override
from whisperconv.estimators import SCMelGAN, SCVQVAE


def test_defaults_without_file():
    cfg = load_config()
    assert cfg.values == DEFAULTS
    assert cfg.stft().hop_length == 256 and cfg.vad().hangover_ms == 200.0


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("train.n_steps: 50\nseed: 3\n")
    cfg = load_config(p, ["seed=9", "train.betas=[0.8, 0.99]"])
    assert cfg["train.n_steps"] == 50 and cfg["seed"] == 9
    assert cfg["train.betas"] == [0.8, 0.99]


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("train.n_stepz: 5\n")
    with pytest.raises(ConfigError, match="n_stepz"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(None, ["nope=1"])
    with pytest.raises(ConfigError):
        parse_override("seed")
    p.write_text("- a\n- b\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(p)


def test_workdir_env_wins(monkeypatch, tmp_path):
    monkeypatch.setenv(WORKDIR_ENV, str(tmp_path))
    assert load_config(None, ["paths.workdir=elsewhere"]).workdir == tmp_path


def test_hash_tracks_values():
    assert load_config().hash() == load_config().hash()
    assert load_config().hash() != load_config(None, ["seed=1"]).hash()


def test_estimators_from_config():
    cfg = load_config(None, ["generator.base_channels=16", "train.learning_rate=0.001"])
    mg = cfg.estimator("sc-melgan")
    assert isinstance(mg, SCMelGAN) and mg.generator.base_channels == 16 and mg.learning_rate == 1e-3
    gan = cfg.estimator("sc-vqvae+gan")
    wg = cfg.estimator("sc-vqvae+wg")
    assert isinstance(gan, SCVQVAE) and gan.decoder_variant == "waveform_gan"
    assert wg.decoder_variant == "mel_conv" and wg.model_name == "sc-vqvae+wg"
    with pytest.raises(ConfigError, match="unknown model"):
        cfg.estimator("wavenet")
