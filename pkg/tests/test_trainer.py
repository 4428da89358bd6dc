import math

import numpy as np
import pytest

from mldl.datasets import make_swiss_roll, swiss_roll_surface_distance
from mldl.losses import MuSchedule, ReconWeights, input_latent_scheme, mu_at
from mldl.net import Architecture, forward_all, init_params
from mldl.trainer import (
    PRESETS,
    Preprocess,
    TrainConfig,
    TrainingDiverged,
    config_from_dict,
    config_to_dict,
    decode,
    encode,
    generate,
    load_model,
    mirror_decoded,
    preset,
    read_config_file,
    reconstruct,
    sample_latent,
    save_model,
    train,
    train_ml_ae,
    train_ml_enc,
)

SMALL = Architecture((3, 16, 12, 2))


def _cfg(**kw):
    base = dict(arch=SMALL, scheme=input_latent_scheme(3), nbh_mode="knn", nbh_param=5, B=3.0,
                mu=MuSchedule(0.2, 10, 20), epochs=30, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def roll():
    return make_swiss_roll(120, 0.0, 0)


@pytest.fixture(scope="module")
def ae_model(roll):
    return train_ml_ae(_cfg(epochs=60), roll)


def test_presets_transcribe_hyperparameters():
    s = preset("swiss-roll")
    assert s.arch.layer_dims == (3, 100, 100, 100, 3, 2) and s.arch.negative_slope == 0.01
    assert (s.nbh_mode, s.nbh_param, s.B) == ("rball", 0.23, 3.0)
    assert (s.mu.mu0, s.mu.start_epoch, s.mu.end_epoch) == (0.2, 500, 1000)
    assert s.scheme.alpha == {(0, 5): 1.0} and s.recon_weights().gamma == (1.0,) * 5
    assert (s.lr, s.epochs, s.data_scale) == (1e-3, 1500, 0.77)
    m = preset("mnist")
    assert m.arch.layer_dims == (784, 1000, 500, 250, 100, 2)
    assert (m.nbh_mode, m.nbh_param, m.B, m.mu.mu0) == ("knn", 5, 2.0, 1.0)
    assert m.recon_weights().gamma == (200.0,) * 5
    sp = preset("spheres")
    assert sp.arch.layer_dims == (101, 50, 25, 2) and (sp.nbh_param, sp.B, sp.mu.mu0) == (15, 3.0, 0.0)
    assert preset("spheres10000").arch.layer_dims == (101, 90, 80, 70, 2)
    assert set(PRESETS) >= {"swiss-roll", "s-curve", "mnist", "spheres"}
    with pytest.raises(ValueError):
        preset("torus")


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(lr=0.0)
    with pytest.raises(ValueError):
        _cfg(nbh_mode="grid")
    with pytest.raises(ValueError):
        _cfg(nbh_update_every=-1)
    with pytest.warns(UserWarning):
        _cfg(epochs=5)


def test_zero_epochs_is_initialization(roll):
    m = train_ml_enc(_cfg(epochs=0, mu=MuSchedule(0.0)), roll)
    init = init_params(SMALL, 0)
    assert all(np.array_equal(a, b) for a, b in zip(m.encoder.arrays(), init.arrays()))
    assert all(len(v) == 0 for v in m.history.values())


def test_history_and_mu_log(roll):
    cfg = _cfg()
    m = train_ml_enc(cfg, roll)
    assert len(m.history["epoch"]) == cfg.epochs
    assert m.history["mu"] == [mu_at(cfg.mu, e) for e in range(cfg.epochs)]
    assert all(math.isfinite(v) for v in m.history["total"])
    # push-away may raise LIS early on; without it LIS alone must go down
    lis_only = train_ml_enc(_cfg(mu=MuSchedule(0.0)), roll)
    assert lis_only.history["lis"][-1] < lis_only.history["lis"][0]


@pytest.mark.parametrize("kind", ["enc", "ae"])
def test_same_seed_same_params(roll, kind):
    a = train(_cfg(epochs=15), roll, kind)
    b = train(_cfg(epochs=15), roll, kind)
    assert np.array_equal(a.encoder.flat(), b.encoder.flat())
    c = train(_cfg(epochs=15, seed=1), roll, kind)
    assert not np.array_equal(a.encoder.flat(), c.encoder.flat())


def test_divergence_aborts_with_diagnostic(roll):
    with pytest.raises(TrainingDiverged) as info:
        train_ml_enc(_cfg(data_scale=1e300, nbh_mode="knn"), roll)
    assert info.value.epoch == 0 and "lis" in str(info.value)


def test_encode_consistency_and_rowwise(roll, ae_model):
    Z = encode(ae_model, roll)
    assert np.array_equal(Z, ae_model.embedding)
    idx = np.array([5, 0, 77, 3])
    assert np.array_equal(encode(ae_model, roll.points[idx]), Z[idx])
    perm = np.random.default_rng(0).permutation(len(roll))
    assert np.array_equal(encode(ae_model, roll.points[perm]), Z[perm])
    with pytest.raises(ValueError):
        encode(ae_model, np.zeros((3, 4)))


def test_autoencoder_outputs(roll, ae_model):
    assert len(mirror_decoded(ae_model)) == 3
    rec = reconstruct(ae_model, roll)
    assert rec.shape == roll.points.shape
    assert np.allclose(decode(ae_model, ae_model.embedding), ae_model.prep.invert(rec))
    assert ae_model.history["rec"][-1] < ae_model.history["rec"][0]
    assert decode(ae_model, np.empty((0, 2))).shape == (0, 3)


def test_zero_gamma_has_no_reconstruction(roll):
    m = train_ml_ae(_cfg(epochs=5, gammas=ReconWeights((0.0, 0.0, 0.0))), roll)
    assert m.history["rec"] == [0.0] * 5


def test_generation(roll, ae_model):
    assert len(generate(ae_model, 0)) == 0
    g1, g2 = generate(ae_model, 50, seed=3), generate(ae_model, 50, seed=3)
    assert np.array_equal(g1.points, g2.points) and g1.points.shape == (50, 3)
    assert np.array_equal(g1.params, sample_latent(ae_model, 50, 3))
    k = generate(ae_model, 40, seed=1, sampler="kde_latent")
    assert k.points.shape == (40, 3)
    with pytest.raises(ValueError):
        generate(ae_model, 5, sampler="grid")
    with pytest.raises(ValueError):
        generate(train_ml_enc(_cfg(epochs=1), roll), 5)


def test_uniform_samples_stay_near_embedding(ae_model):
    from scipy.spatial import cKDTree

    Z = ae_model.embedding
    S = sample_latent(ae_model, 200, seed=0)
    lo, hi = Z.min(0), Z.max(0)
    assert np.all((S >= lo) & (S <= hi))
    d, _ = cKDTree(Z).query(Z, k=6)
    assert cKDTree(Z).query(S)[0].max() <= 2 * np.median(d[:, -1]) + 1e-12


def test_generated_points_are_in_data_space(ae_model):
    # decoded points come back in the original units, so surface distance is meaningful
    g = generate(ae_model, 100, seed=0)
    assert np.all(np.isfinite(swiss_roll_surface_distance(g.points)))
    assert np.abs(g.points).max() < 100


def test_preprocess_roundtrip(roll):
    for mode in ("standardize", "center", "none"):
        p = Preprocess.fit(roll.points, mode, 0.5)
        assert np.allclose(p.invert(p.apply(roll.points)), roll.points, atol=1e-12)
    p = Preprocess.fit(roll.points, "standardize")
    Y = p.apply(roll.points)
    assert np.allclose(Y.mean(0), 0, atol=1e-12)
    assert np.mean(Y.var(0)) == pytest.approx(1.0)
    # one factor for every coordinate keeps distance ratios
    D0 = np.linalg.norm(roll.points[0] - roll.points[1]) / np.linalg.norm(roll.points[2] - roll.points[3])
    D1 = np.linalg.norm(Y[0] - Y[1]) / np.linalg.norm(Y[2] - Y[3])
    assert D0 == pytest.approx(D1, rel=1e-12)


@pytest.mark.parametrize("name", PRESETS)
def test_config_dict_roundtrip(name):
    cfg = preset(name, seed=4, final_lr=1e-5, nbh_update_every=50)
    assert config_from_dict({k: str(v) for k, v in config_to_dict(cfg).items()}) == cfg


def test_config_overrides_and_file(tmp_path):
    base = preset("swiss-roll")
    cfg = config_from_dict({"B": "2.5", "mu0": "0.1", "scheme": "M4"}, base)
    assert cfg.B == 2.5 and cfg.mu.mu0 == 0.1 and cfg.mu.end_epoch == 1000
    assert cfg.scheme.name == "M4" and cfg.nbh_param == 0.23
    (tmp_path / "a.cfg").write_text("B = 2\nepochs = 10\n")
    assert read_config_file(tmp_path / "a.cfg") == {"train": {"B": "2", "epochs": "10"}}
    (tmp_path / "b.cfg").write_text("[train]\nlr = 0.01\n[sweep]\nn = 700\n")
    assert read_config_file(tmp_path / "b.cfg")["sweep"] == {"n": "700"}


def test_save_load_roundtrip(tmp_path, roll, ae_model):
    save_model(ae_model, tmp_path / "m")
    back = load_model(tmp_path / "m", roll)
    assert back.config == ae_model.config
    assert np.array_equal(back.embedding, ae_model.embedding)
    assert np.array_equal(decode(back, back.embedding), decode(ae_model, ae_model.embedding))
    assert back.history["lis"] == ae_model.history["lis"]
    assert back.nbh.neighbors[0].tolist() == ae_model.nbh.neighbors[0].tolist()
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "missing")


def test_evolving_neighborhoods(roll):
    fixed = train_ml_enc(_cfg(epochs=20), roll)
    evolving = train_ml_enc(_cfg(epochs=20, nbh_update_every=5), roll)
    assert not np.array_equal(fixed.encoder.flat(), evolving.encoder.flat())
    # with latent neighborhoods added the LIS energy covers at least the input cliques
    assert evolving.history["lis"][0] >= fixed.history["lis"][0]
    assert evolving.nbh.neighbors[0].tolist() == fixed.nbh.neighbors[0].tolist()


def test_callback_sees_every_epoch(roll):
    seen = []
    train(_cfg(epochs=7), roll, "enc", lambda e, p, a: seen.append((e, a.output.shape)))
    assert seen == [(e, (120, 2)) for e in range(7)]
    with pytest.raises(ValueError):
        train(_cfg(), roll, "vae")


def test_input_dimension_checked():
    with pytest.raises(ValueError):
        train_ml_enc(_cfg(), np.zeros((10, 4)))
    with pytest.raises(ValueError):
        train_ml_enc(_cfg(), np.zeros((1, 3)))


def test_forward_of_model_input_matches_embedding(roll, ae_model):
    X = ae_model.prep.apply(roll.points)
    assert np.array_equal(forward_all(ae_model.encoder, X).output, ae_model.embedding)
