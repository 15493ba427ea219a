import numpy as np
import pytest
import torch
from sklearn.base import clone

from whisperconv.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from whisperconv.estimators import SCMelGAN, SCVQVAE, tiny_discriminator_config, tiny_generator_config
from whisperconv.codebook import InitDataTooSmall


def toy_data(rng, n=2, frames=20, hop=256):
    X = [rng.normal(-4, 1, size=(80, frames + k)) for k in range(n)]
    y = [0.3 * np.sin(np.arange((frames + k) * hop) * 0.05 * (k + 1)) for k in range(n)]
    return X, y


def melgan(**kw):
    return SCMelGAN(**{"generator": tiny_generator_config(base_channels=8),
                       "discriminator": tiny_discriminator_config(), "batch_size": 2, "segment_frames": 8,
                       "n_steps": 2, **kw})


def vqvae(variant="mel_conv", **kw):
    extra = {}
    if variant == "waveform_gan":
        extra = dict(generator=tiny_generator_config(base_channels=8), discriminator=tiny_discriminator_config())
    return SCVQVAE(**{"decoder_variant": variant, "hidden_channels": 16, "latent_dim": 8, "n_codewords": 16,
                      "init_segments": 8, "batch_size": 2, "segment_frames": 8, "n_steps": 2, **extra, **kw})


def weights(est):
    return {f"{k}.{n}": t.clone() for k, m in est._modules().items() for n, t in m.state_dict().items()}


def same_weights(a, b):
    wa, wb = weights(a), weights(b)
    return wa.keys() == wb.keys() and all(torch.equal(wa[k], wb[k]) for k in wa)


@pytest.mark.parametrize("make", [melgan, vqvae, lambda **kw: vqvae("waveform_gan", **kw)])
def test_fit_predict_shapes(make, rng):
    X, y = toy_data(rng)
    est = make().fit(X, y)
    assert est.step_ == 2 and len(est.history_) == 2
    out = est.predict(X)
    for mel, o in zip(X, out):
        if o.ndim == 1:
            assert o.size == 256 * mel.shape[1]
        else:
            assert o.shape == mel.shape
        assert np.all(np.isfinite(o))


def test_get_params_and_clone():
    est = melgan(seed=7)
    params = est.get_params()
    assert params["seed"] == 7 and params["n_steps"] == 2
    twin = clone(est)
    assert twin.get_params()["generator"] == est.generator
    assert not hasattr(twin, "step_")


def test_same_seed_same_weights(rng):
    X, y = toy_data(rng)
    assert same_weights(melgan().fit(X, y), melgan().fit(X, y))
    assert not same_weights(melgan().fit(X, y), melgan(seed=1).fit(X, y))


@pytest.mark.parametrize("make", [melgan, vqvae])
def test_warm_start_continues_exactly(make, rng):
    X, y = toy_data(rng)
    full = make(n_steps=4).fit(X, y)
    part = make().fit(X, y)
    part.set_params(n_steps=4, warm_start=True).fit(X, y)
    assert part.step_ == 4
    assert same_weights(full, part)


@pytest.mark.parametrize("make", [melgan, vqvae, lambda **kw: vqvae("waveform_gan", **kw)])
def test_checkpoint_resume_matches_uninterrupted(make, rng, tmp_path):
    X, y = toy_data(rng)
    full = make(n_steps=4).fit(X, y)
    part = make().fit(X, y)
    save_checkpoint(tmp_path / "c.pt", part)
    resumed = load_checkpoint(tmp_path / "c.pt")
    assert type(resumed) is type(part) and resumed.step_ == 2
    resumed.set_params(n_steps=4, warm_start=True).fit(X, y)
    assert same_weights(full, resumed)
    np.testing.assert_array_equal(full.predict(X[:1])[0], resumed.predict(X[:1])[0])


def test_bad_checkpoints(tmp_path):
    (tmp_path / "junk.pt").write_bytes(b"junk")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.pt")
    torch.save({"format": "other"}, tmp_path / "other.pt")
    with pytest.raises(CheckpointError, match="not a"):
        load_checkpoint(tmp_path / "other.pt")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.pt")


def test_input_validation(rng):
    X, y = toy_data(rng)
    with pytest.raises(ValueError, match="different lengths"):
        melgan().fit(X, y[:1])
    with pytest.raises(ValueError, match="mel bands"):
        melgan().fit([np.zeros((40, 10))], y[:1])
    with pytest.raises(ValueError, match="non-finite"):
        melgan().fit([np.full((80, 10), np.nan)], y[:1])
    with pytest.raises(ValueError, match="upsamples"):
        SCMelGAN(generator=tiny_generator_config(upsample_strides=(8, 8)), n_steps=1).fit(X, y)


def test_predict_before_fit_raises():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        melgan().predict([np.zeros((80, 4))])


def test_kmeans_init_needs_enough_latents(rng):
    X, y = toy_data(rng)
    with pytest.raises(InitDataTooSmall):
        vqvae(n_codewords=256, init_segments=2).fit(X, y)


def test_encode_indices_range(rng):
    X, y = toy_data(rng)
    est = vqvae().fit(X, y)
    idx = est.encode_indices(X)
    assert [i.size for i in idx] == [-(-m.shape[1] // 2) for m in X]
    assert all(i.min() >= 0 and i.max() < 16 for i in idx)


def test_convert_returns_clip(one_pair, rng):
    X, y = toy_data(rng)
    est = melgan().fit(X, y)
    w, _ = one_pair.load()
    out = est.convert(w)
    assert out.sample_rate == 22050
    assert out.samples.size == 256 * est.whisper_features(w).n_frames
    assert np.max(np.abs(out.samples)) <= 1.0
