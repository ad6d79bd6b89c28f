"""Genuine-only density model for outlier rescoring.

PCA (covariance eigendecomposition, keep enough components for 98% of the
energy) feeds a small variational autoencoder whose encoder/decoder use
hidden layers of 128, 64 and 32 units around a 16-dim latent. Deviation is
the negated reconstruction probability: the Monte-Carlo average of the
decoder's Gaussian log-likelihood under the encoder posterior.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

PCA_MAGIC = b"SGPCA1"
VAE_MAGIC = b"SGVAE1"
LOG2PI = float(np.log(2.0 * np.pi))

HIDDEN_DIMS = (128, 64, 32)
LATENT_DIM = 16


# ------------------------------------------------------------------- PCA

@dataclass(frozen=True, eq=False)
class PcaTransform:
    mean: np.ndarray
    basis: np.ndarray          # k x d, orthonormal rows
    eigenvalues: np.ndarray    # k, descending
    retained_energy: float

    def __post_init__(self):
        k, d = self.basis.shape
        gram = self.basis @ self.basis.T
        if np.max(np.abs(gram - np.eye(k))) > 1e-8:
            raise ValueError("basis rows are not orthonormal")
        if np.any(np.diff(self.eigenvalues) > 1e-12):
            raise ValueError("eigenvalues must be descending")

    @property
    def k(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]


def fit_pca(frames: np.ndarray, energy_target: float = 0.98) -> PcaTransform:
    """Eigendecompose the sample covariance and keep the smallest number of
    leading components whose cumulative eigenvalue fraction reaches the
    energy target."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a matrix with at least two rows")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (x.shape[0] - 1)
    eigval, eigvec = np.linalg.eigh(cov)
    eigval = np.clip(eigval[::-1], 0.0, None)
    eigvec = eigvec[:, ::-1]
    total = float(eigval.sum())
    if total <= 0.0:
        raise ValueError("zero total variance: nothing to retain")
    frac = np.cumsum(eigval) / total
    k = int(np.searchsorted(frac, energy_target - 1e-12) + 1)
    k = min(k, eigval.size)
    return PcaTransform(mean, eigvec[:, :k].T.copy(), eigval[:k].copy(), float(frac[k - 1]))


def pca_project(t: PcaTransform, x: np.ndarray) -> np.ndarray:
    """Project vectors (or a matrix of row vectors) onto the retained basis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != t.d:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} != {t.d}")
    return (x - t.mean) @ t.basis.T


# ------------------------------------------------------------------- VAE

@dataclass
class VaeModel:
    """Encoder/decoder parameters; tanh hidden layers, linear Gaussian heads."""

    input_dim: int
    latent_dim: int
    enc: list          # [(W, b)] for 128 -> 64 -> 32
    enc_mu: tuple
    enc_lv: tuple
    dec: list          # [(W, b)] for 32 -> 64 -> 128
    dec_mu: tuple
    dec_lv: tuple
    final_elbo: float | None = None

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in self.enc + [self.enc_mu, self.enc_lv] + self.dec + [self.dec_mu, self.dec_lv]:
            out.extend([w, b])
        return out


@dataclass(frozen=True)
class VaeConfig:
    latent_dim: int = LATENT_DIM
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 50
    batch: int = 128
    freeze_noise: bool = False


@dataclass(frozen=True)
class DeviationScore:
    utterance_id: str
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("deviation score must be finite")


def init_vae(input_dim: int, rng: np.random.Generator,
             latent_dim: int = LATENT_DIM) -> VaeModel:
    if latent_dim >= input_dim:
        raise ValueError("latent dim must be smaller than the input dim")

    def layer(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, (fan_in, fan_out)), np.zeros(fan_out)

    enc_sizes = (input_dim,) + HIDDEN_DIMS
    dec_sizes = (latent_dim,) + HIDDEN_DIMS[::-1]
    enc = [layer(a, b) for a, b in zip(enc_sizes, enc_sizes[1:])]
    dec = [layer(a, b) for a, b in zip(dec_sizes, dec_sizes[1:])]
    return VaeModel(
        input_dim, latent_dim, enc,
        layer(HIDDEN_DIMS[-1], latent_dim), layer(HIDDEN_DIMS[-1], latent_dim),
        dec, layer(HIDDEN_DIMS[0], input_dim), layer(HIDDEN_DIMS[0], input_dim),
    )


def _mlp_forward(layers, x):
    acts = [x]
    h = x
    for w, b in layers:
        h = np.tanh(h @ w + b)
        acts.append(h)
    return h, acts


def _encode(model: VaeModel, x):
    h, acts = _mlp_forward(model.enc, x)
    mu = h @ model.enc_mu[0] + model.enc_mu[1]
    lv = np.clip(h @ model.enc_lv[0] + model.enc_lv[1], -30.0, 30.0)
    return mu, lv, acts


def _decode(model: VaeModel, z):
    g, acts = _mlp_forward(model.dec, z)
    mx = g @ model.dec_mu[0] + model.dec_mu[1]
    lvx = np.clip(g @ model.dec_lv[0] + model.dec_lv[1], -30.0, 30.0)
    return mx, lvx, acts


def _mlp_backward(layers, acts, delta, grads):
    """Accumulate grads for a tanh MLP; returns the delta at the input."""
    for i in range(len(layers) - 1, -1, -1):
        delta = delta * (1.0 - acts[i + 1] ** 2)
        grads[i][0] += acts[i].T @ delta
        grads[i][1] += delta.sum(axis=0)
        delta = delta @ layers[i][0].T
    return delta


def elbo_loss_and_grads(model: VaeModel, x: np.ndarray, eps: np.ndarray):
    """Negative ELBO (Gaussian likelihood + KL to N(0, I)) and its gradients.

    `eps` is the reparameterization noise, one row per sample; freezing it
    makes the objective deterministic and finite-difference checkable.
    """
    n = x.shape[0]
    mu, lv, enc_acts = _encode(model, x)
    sig = np.exp(0.5 * lv)
    z = mu + sig * eps
    mx, lvx, dec_acts = _decode(model, z)

    inv_vx = np.exp(-lvx)
    sq = (x - mx) ** 2
    recon = 0.5 * np.sum(LOG2PI + lvx + sq * inv_vx, axis=1)
    kl = 0.5 * np.sum(mu ** 2 + np.exp(lv) - 1.0 - lv, axis=1)
    loss = float(np.mean(recon + kl))

    g_enc = [[np.zeros_like(w), np.zeros_like(b)] for w, b in model.enc]
    g_dec = [[np.zeros_like(w), np.zeros_like(b)] for w, b in model.dec]
    zeros = lambda t: [np.zeros_like(t[0]), np.zeros_like(t[1])]
    g_enc_mu, g_enc_lv = zeros(model.enc_mu), zeros(model.enc_lv)
    g_dec_mu, g_dec_lv = zeros(model.dec_mu), zeros(model.dec_lv)

    d_mx = (mx - x) * inv_vx / n
    d_lvx = 0.5 * (1.0 - sq * inv_vx) / n
    g3 = dec_acts[-1]
    g_dec_mu[0] += g3.T @ d_mx
    g_dec_mu[1] += d_mx.sum(axis=0)
    g_dec_lv[0] += g3.T @ d_lvx
    g_dec_lv[1] += d_lvx.sum(axis=0)
    d_g3 = d_mx @ model.dec_mu[0].T + d_lvx @ model.dec_lv[0].T
    d_z = _mlp_backward(model.dec, dec_acts, d_g3, g_dec)

    d_mu = d_z + mu / n
    d_lv = d_z * 0.5 * sig * eps + 0.5 * (np.exp(lv) - 1.0) / n
    h3 = enc_acts[-1]
    g_enc_mu[0] += h3.T @ d_mu
    g_enc_mu[1] += d_mu.sum(axis=0)
    g_enc_lv[0] += h3.T @ d_lv
    g_enc_lv[1] += d_lv.sum(axis=0)
    d_h3 = d_mu @ model.enc_mu[0].T + d_lv @ model.enc_lv[0].T
    _mlp_backward(model.enc, enc_acts, d_h3, g_enc)

    grads = []
    for pair in g_enc + [g_enc_mu, g_enc_lv] + g_dec + [g_dec_mu, g_dec_lv]:
        grads.extend(pair)
    return loss, grads


def train_vae(frames: np.ndarray, config: VaeConfig, rng: np.random.Generator) -> VaeModel:
    """Maximize the ELBO with SGD + momentum over reparameterized samples."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("frames must be a non-empty matrix")
    model = init_vae(x.shape[1], rng, config.latent_dim)
    n = x.shape[0]
    frozen = rng.standard_normal((n, config.latent_dim)) if config.freeze_noise else None
    params = model.params()
    vel = [np.zeros_like(p) for p in params]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch):
            idx = order[lo:lo + config.batch]
            eps = frozen[idx] if frozen is not None else rng.standard_normal((idx.size, config.latent_dim))
            loss, grads = elbo_loss_and_grads(model, x[idx], eps)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite ELBO at epoch {epoch}")
            for p, v, g in zip(params, vel, grads):
                v *= config.momentum
                v -= config.lr * g
                p += v
    eval_eps = frozen if frozen is not None else \
        np.random.default_rng(0).standard_normal((n, config.latent_dim))
    loss, _ = elbo_loss_and_grads(model, x, eval_eps)
    model.final_elbo = -loss
    return model


def vae_gradient_check(model: VaeModel, x: np.ndarray, h: float = 1e-5,
                       n_params: int = 200, seed: int = 0) -> float:
    """Finite-difference check of the ELBO gradients with frozen noise."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((x.shape[0], model.latent_dim))
    _, grads = elbo_loss_and_grads(model, x, eps)
    arrays = model.params()
    total = sum(a.size for a in arrays)
    picks = rng.choice(total, size=min(n_params, total), replace=False)
    offsets = np.cumsum([0] + [a.size for a in arrays])
    max_err = 0.0
    for flat_idx in picks:
        ai = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = int(flat_idx - offsets[ai])
        arr = arrays[ai].reshape(-1)
        orig = arr[local]
        arr[local] = orig + h
        lp, _ = elbo_loss_and_grads(model, x, eps)
        arr[local] = orig - h
        lm, _ = elbo_loss_and_grads(model, x, eps)
        arr[local] = orig
        fd = (lp - lm) / (2 * h)
        ana = grads[ai].reshape(-1)[local]
        err = abs(ana - fd) / max(abs(ana) + abs(fd), 1e-6)
        max_err = max(max_err, err)
    return max_err


def reconstruction_probability(model: VaeModel, frames: np.ndarray,
                               mc_samples: int = 16,
                               rng: np.random.Generator | None = None) -> float:
    """Deviation score: negated mean decoder log-likelihood over frames.

    The Monte-Carlo noise is one shared draw reused for every frame
    (common random numbers), which keeps the score reproducible and
    invariant to frame order and duplication.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("frames must be a non-empty matrix")
    if rng is None:
        rng = np.random.default_rng(0)
    eps = rng.standard_normal((mc_samples, model.latent_dim))
    mu, lv, _ = _encode(model, x)
    sig = np.exp(0.5 * lv)
    loglik = np.zeros(x.shape[0])
    for s in range(mc_samples):
        z = mu + sig * eps[s]
        mx, lvx, _ = _decode(model, z)
        loglik += -0.5 * np.sum(LOG2PI + lvx + (x - mx) ** 2 * np.exp(-lvx), axis=1)
    loglik /= mc_samples
    return float(-np.mean(loglik))


def rescore(pool, fake_fraction: float = 0.45) -> dict[str, str]:
    """Mark the top `fake_fraction` of the pool (by deviation) as fake.

    The cutoff count is round-half-up; ties in score break by utterance id.
    """
    scores = [(p.utterance_id, p.score) if isinstance(p, DeviationScore) else tuple(p)
              for p in pool]
    if not scores:
        raise ValueError("empty rescore pool")
    n_fake = int(np.floor(fake_fraction * len(scores) + 0.5))
    ranked = sorted(scores, key=lambda t: (-t[1], t[0]))
    out = {}
    for i, (uid, _) in enumerate(ranked):
        out[uid] = "fake" if i < n_fake else "genuine"
    return out


# ----------------------------------------------------------- model files

def save_pca(t: PcaTransform, path) -> None:
    with open(path, "wb") as fh:
        fh.write(PCA_MAGIC)
        fh.write(struct.pack("<IId", t.d, t.k, t.retained_energy))
        for arr in (t.mean, t.eigenvalues, t.basis):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_pca(path) -> PcaTransform:
    blob = _read_blob(path, PCA_MAGIC, "PCA model")
    d, k, retained = struct.unpack_from("<IId", blob, 6)
    off = 6 + 16
    mean, off = _take(blob, (d,), off)
    eigenvalues, off = _take(blob, (k,), off)
    basis, off = _take(blob, (k, d), off)
    return PcaTransform(mean, basis, eigenvalues, retained)


def save_vae(model: VaeModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(VAE_MAGIC)
        fh.write(struct.pack("<II", model.input_dim, model.latent_dim))
        elbo = model.final_elbo if model.final_elbo is not None else float("nan")
        fh.write(struct.pack("<d", elbo))
        for arr in model.params():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_vae(path) -> VaeModel:
    blob = _read_blob(path, VAE_MAGIC, "VAE model")
    input_dim, latent_dim = struct.unpack_from("<II", blob, 6)
    (elbo,) = struct.unpack_from("<d", blob, 14)
    off = 22
    model = init_vae(input_dim, np.random.default_rng(0), latent_dim)
    for arr in model.params():
        data, off = _take(blob, arr.shape, off)
        arr[...] = data
    model.final_elbo = None if np.isnan(elbo) else float(elbo)
    return model


def _read_blob(path, magic, kind) -> bytes:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc}")
    if blob[:6] != magic:
        raise DataError(f"{path}: not a {kind} file")
    return blob


def _take(blob, shape, off):
    count = int(np.prod(shape))
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
    return arr, off + 8 * count
