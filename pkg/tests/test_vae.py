import numpy as np
import pytest

from spliceloc.errors import DataError
from spliceloc.vae import (
    DeviationScore,
    VaeConfig,
    elbo_loss_and_grads,
    fit_pca,
    init_vae,
    load_pca,
    load_vae,
    pca_project,
    reconstruction_probability,
    rescore,
    save_pca,
    save_vae,
    train_vae,
    vae_gradient_check,
)


# -------------------------------------------------------------------- PCA

def test_fit_pca_degenerate_axis():
    rng = np.random.default_rng(0)
    x = np.zeros((500, 2))
    x[:, 1] = rng.standard_normal(500)
    t = fit_pca(x)
    assert t.k == 1
    assert abs(abs(t.basis[0, 1]) - 1.0) < 1e-9
    assert abs(t.basis[0, 0]) < 1e-9
    assert t.retained_energy == pytest.approx(1.0)


def test_fit_pca_isotropic_needs_all():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((10_000, 3))
    # eigenvalue oracle: independent covariance computation
    xc = x - x.mean(0)
    cov = xc.T @ xc / (len(x) - 1)
    oracle_eigs = np.sort(np.linalg.eigvalsh(cov))[::-1]
    t = fit_pca(x)
    assert t.k == 3
    np.testing.assert_allclose(np.sort(t.eigenvalues)[::-1], oracle_eigs, rtol=1e-9)


def test_fit_pca_reconstruction_energy():
    rng = np.random.default_rng(2)
    # anisotropic data with a long spectrum tail
    scales = np.array([5.0, 3.0, 2.0, 1.0, 0.5, 0.3, 0.2, 0.1])
    x = rng.standard_normal((4000, 8)) * scales
    t = fit_pca(x, energy_target=0.98)
    y = pca_project(t, x)
    recon = y @ t.basis + t.mean
    err = np.sum((x - recon) ** 2) / np.sum((x - x.mean(0)) ** 2)
    assert err <= 1 - 0.98 + 0.005


def test_fit_pca_minimal_k_and_orthonormal_fuzz():
    rng = np.random.default_rng(3)
    for _ in range(100):
        d = int(rng.integers(3, 16))
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        scales = np.sort(rng.uniform(0.05, 4.0, d))[::-1]
        x = rng.standard_normal((600, d)) @ (q * scales).T
        t = fit_pca(x, energy_target=0.98)
        assert np.max(np.abs(t.basis @ t.basis.T - np.eye(t.k))) < 1e-8
        assert t.retained_energy >= 0.98
        if t.k > 1:
            # one fewer component must not reach the target
            xc = x - x.mean(0)
            eig = np.sort(np.linalg.eigvalsh(xc.T @ xc / (len(x) - 1)))[::-1]
            assert eig[:t.k - 1].sum() / eig.sum() < 0.98


def test_fit_pca_zero_variance():
    with pytest.raises(ValueError):
        fit_pca(np.ones((100, 4)))


def test_pca_project_identities():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((300, 6)) * np.array([3, 2, 1, 0.5, 0.2, 0.1])
    t = fit_pca(x)
    np.testing.assert_allclose(pca_project(t, t.mean), np.zeros(t.k), atol=1e-12)
    y = pca_project(t, t.mean + t.basis[0])
    e0 = np.zeros(t.k)
    e0[0] = 1.0
    np.testing.assert_allclose(y, e0, atol=1e-12)
    # projection is a contraction
    for _ in range(50):
        v = rng.standard_normal(6)
        assert np.linalg.norm(pca_project(t, v)) <= np.linalg.norm(v - t.mean) + 1e-12
    with pytest.raises(ValueError):
        pca_project(t, np.zeros(5))


# -------------------------------------------------------------------- VAE

def test_vae_gradient_check():
    rng = np.random.default_rng(5)
    model = init_vae(20, rng)
    x = rng.standard_normal((32, 20))
    assert vae_gradient_check(model, x) < 1e-3


def test_vae_gradient_check_small_dims():
    rng = np.random.default_rng(6)
    model = init_vae(18, rng, latent_dim=4)
    x = rng.standard_normal((16, 18)) * 2.0
    assert vae_gradient_check(model, x) < 1e-3


def test_train_vae_gaussian_optimum():
    # analytic optimum for N(0, I) data: KL ~ 0, reconstruction variance ~ 1
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2000, 20))
    model = train_vae(x, VaeConfig(), np.random.default_rng(8))
    from spliceloc.vae import _decode, _encode
    mu, lv, _ = _encode(model, x)
    kl = 0.5 * np.mean(np.sum(mu ** 2 + np.exp(lv) - 1.0 - lv, axis=1))
    assert kl / model.latent_dim < 0.5
    eps = np.random.default_rng(9).standard_normal((x.shape[0], model.latent_dim))
    _, lvx, _ = _decode(model, mu + np.exp(0.5 * lv) * eps)
    assert abs(float(np.mean(np.exp(lvx))) - 1.0) < 0.3


def test_train_vae_zero_epochs_is_init():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((200, 20))
    ref = init_vae(20, np.random.default_rng(11))
    model = train_vae(x, VaeConfig(epochs=0), np.random.default_rng(11))
    for a, b in zip(model.params(), ref.params()):
        assert np.array_equal(a, b)


def test_train_vae_elbo_monotone_full_batch():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((256, 20)) * 0.5
    elbos = []
    for epochs in range(0, 9, 2):
        cfg = VaeConfig(lr=1e-4, momentum=0.0, epochs=epochs, batch=256, freeze_noise=True)
        model = train_vae(x, cfg, np.random.default_rng(13))
        elbos.append(model.final_elbo)
    assert all(b >= a - 1e-12 for a, b in zip(elbos, elbos[1:]))


def test_train_vae_deterministic():
    rng = np.random.default_rng(14)
    x = rng.standard_normal((300, 20))
    m1 = train_vae(x, VaeConfig(epochs=2), np.random.default_rng(15))
    m2 = train_vae(x, VaeConfig(epochs=2), np.random.default_rng(15))
    for a, b in zip(m1.params(), m2.params()):
        assert np.array_equal(a, b)


def test_reconstruction_probability_closed_form():
    # frames equal to the decoder's unconditional mean with tiny variance:
    # score approaches the analytic -log N(mu | mu, sigma^2)
    rng = np.random.default_rng(16)
    model = init_vae(20, rng, latent_dim=4)
    # collapse the encoder: mu = 0, logvar very negative -> z ~ 0 deterministically
    for w, b in model.enc + [model.enc_mu]:
        w[:] = 0.0
        b[:] = 0.0
    model.enc_lv[0][:] = 0.0
    model.enc_lv[1][:] = -30.0
    # decoder constant: mean = c, logvar = const
    for w, b in model.dec + [model.dec_mu, model.dec_lv]:
        w[:] = 0.0
        b[:] = 0.0
    c = rng.standard_normal(20)
    model.dec_mu[1][:] = c
    lvx = -2.0
    model.dec_lv[1][:] = lvx
    frames = np.tile(c, (7, 1))
    score = reconstruction_probability(model, frames, rng=np.random.default_rng(17))
    analytic = 0.5 * 20 * (np.log(2 * np.pi) + lvx)  # -log N(mu|mu, sigma^2)
    assert score == pytest.approx(analytic, abs=1e-9)


def test_reconstruction_probability_invariances():
    rng = np.random.default_rng(18)
    x = rng.standard_normal((500, 12))
    model = train_vae(x, VaeConfig(epochs=3, latent_dim=6), np.random.default_rng(19))
    frames = rng.standard_normal((40, 12))
    s0 = reconstruction_probability(model, frames, rng=np.random.default_rng(20))
    s_dup = reconstruction_probability(model, np.vstack([frames, frames]),
                                       rng=np.random.default_rng(20))
    s_perm = reconstruction_probability(model, frames[rng.permutation(40)],
                                        rng=np.random.default_rng(20))
    assert s_dup == pytest.approx(s0, abs=1e-10)
    assert s_perm == pytest.approx(s0, abs=1e-10)


def test_reconstruction_probability_separates_outliers():
    rng = np.random.default_rng(21)
    x = rng.standard_normal((3000, 12))
    model = train_vae(x, VaeConfig(epochs=20, latent_dim=6), np.random.default_rng(22))
    in_scores = [reconstruction_probability(model, rng.standard_normal((30, 12)),
                                            rng=np.random.default_rng(23))
                 for _ in range(20)]
    out_scores = [reconstruction_probability(model, rng.standard_normal((30, 12)) + 10.0,
                                             rng=np.random.default_rng(23))
                  for _ in range(20)]
    assert min(out_scores) > max(in_scores)


# ---------------------------------------------------------------- rescore

def test_rescore_round_half_up():
    pool = [DeviationScore(f"u{i:02d}", float(i)) for i in range(10)]
    out = rescore(pool)
    assert sum(v == "fake" for v in out.values()) == 5  # round(4.5) -> 5
    # highest deviations marked fake
    assert out["u09"] == "fake" and out["u00"] == "genuine"


def test_rescore_single():
    out = rescore([DeviationScore("only", 3.0)])
    assert out == {"only": "genuine"}  # round(0.45) = 0


def test_rescore_tie_breaks_lexicographic():
    pool = [DeviationScore(uid, 1.0) for uid in ("d", "b", "a", "c")]
    out = rescore(pool)  # round(1.8) = 2 fake: lexicographically smallest first
    assert out == {"a": "fake", "b": "fake", "c": "genuine", "d": "genuine"}


def test_rescore_exact_count_property():
    rng = np.random.default_rng(24)
    for n in range(1, 60):
        pool = [DeviationScore(f"u{i:03d}", float(rng.standard_normal())) for i in range(n)]
        out = rescore(pool)
        assert sum(v == "fake" for v in out.values()) == int(np.floor(0.45 * n + 0.5))


# ------------------------------------------------------------ model files

def test_pca_file_roundtrip(tmp_path):
    rng = np.random.default_rng(25)
    x = rng.standard_normal((500, 9)) * np.arange(1, 10)[::-1]
    t = fit_pca(x)
    save_pca(t, tmp_path / "p.bin")
    back = load_pca(tmp_path / "p.bin")
    np.testing.assert_array_equal(back.basis, t.basis)
    np.testing.assert_array_equal(back.mean, t.mean)
    assert back.retained_energy == t.retained_energy
    with pytest.raises(DataError):
        load_pca(tmp_path / "missing.bin")


def test_vae_file_roundtrip(tmp_path):
    rng = np.random.default_rng(26)
    x = rng.standard_normal((300, 10))
    model = train_vae(x, VaeConfig(epochs=1, latent_dim=4), np.random.default_rng(27))
    save_vae(model, tmp_path / "v.bin")
    back = load_vae(tmp_path / "v.bin")
    frames = rng.standard_normal((20, 10))
    s1 = reconstruction_probability(model, frames, rng=np.random.default_rng(1))
    s2 = reconstruction_probability(back, frames, rng=np.random.default_rng(1))
    assert s1 == s2
    assert back.final_elbo == pytest.approx(model.final_elbo)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAGIC")
    with pytest.raises(DataError):
        load_vae(bad)
