"""End-to-end pipeline stages behind the CLI subcommands.

Every stage is deterministic given the config seed: per-utterance work uses
RNG streams keyed by (seed, stage, index), and multi-process runs gather
results into id-sorted outputs, so the worker count never changes a byte of
the output files.
"""

from __future__ import annotations

import multiprocessing as mp
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .audio import FrameGridSpec, Waveform, features, n_frames, read_wav
from .config import PipelineConfig
from .errors import DataError
from .forge import (
    GENUINE,
    Corpus,
    augment,
    forge_corpus,
    read_manifest,
    sample_training_clip,
)
from .fusion import apply_vae_override, classify_frames, fuse, write_submission
from .inference import detect_boundaries, score_utterance, segment
from .report import evaluate_submission, render_figures, write_report
from .scorer import FrameScores, load_scorer, read_scores, save_scorer, train, write_scores
from .synth import spectral_degrade, synth_genuine
from .vae import (
    VaeConfig,
    fit_pca,
    load_pca,
    load_vae,
    pca_project,
    reconstruction_probability,
    save_pca,
    save_vae,
    train_vae,
)

# RNG stream tags: (seed, tag, index)
_POOL_GENUINE, _POOL_FAKE, _UTTERANCE, _VAE_NOISE = 0, 1, 2, 3
_TRAIN_BOUNDARY, _TRAIN_SPOOF, _TRAIN_VAE = 10, 11, 12

_worker_state: dict = {}


def _rng(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, tag, index])


def _pmap(fn, items, jobs: int, initializer=None, initargs=()):
    if jobs <= 1:
        if initializer:
            initializer(*initargs)
        return [fn(i) for i in items]
    with mp.get_context("fork").Pool(jobs, initializer=initializer, initargs=initargs) as pool:
        return pool.map(fn, items)


# ------------------------------------------------------------------ forge

def _synth_one(args):
    seed, tag, i, dur_range = args
    rng = _rng(seed, tag, i)
    n = int(rng.uniform(*dur_range) * 16000)
    w = synth_genuine(rng, n)
    return spectral_degrade(w) if tag == _POOL_FAKE else w


def run_forge(cfg: PipelineConfig, out_dir, jobs: int | None = None):
    """Synthesize pools, forge the corpus, and write manifest + config."""
    jobs = cfg.jobs if jobs is None else jobs
    fs = cfg.forge
    dur = (fs.min_duration_s, fs.max_duration_s)
    n_g = fs.n_genuine + fs.n_partial          # dedicated bases for partials
    n_f = fs.n_fake + max(4, fs.n_partial // 4) if fs.n_partial else fs.n_fake
    tasks = [(cfg.seed, _POOL_GENUINE, i, dur) for i in range(n_g)] + \
            [(cfg.seed, _POOL_FAKE, i, dur) for i in range(n_f)]
    pool = _pmap(_synth_one, tasks, jobs)
    genuine_pool, fake_pool = pool[:n_g], pool[n_g:]
    entries = forge_corpus(genuine_pool, fake_pool,
                           (fs.n_genuine, fs.n_fake, fs.n_partial), out_dir, cfg.seed)
    cfgmod.dump(cfg, Path(out_dir) / "effective.cfg")
    return entries


# --------------------------------------------------------------- training

def build_training_set(task: str, corpus: Corpus, cfg: PipelineConfig,
                       rng: np.random.Generator):
    mix = cfg.mix_boundary if task == "boundary" else cfg.mix_spoof
    data = []
    for _ in range(cfg.train.clips):
        clip, labels = sample_training_clip(task, corpus, mix, cfg.grid, rng)
        clip = augment(clip, rng, cfg.augment)
        data.append((features(clip, cfg.grid), labels))
    return data


def run_train_scorer(cfg: PipelineConfig, task: str, manifest, models_dir) -> float:
    corpus = Corpus.open(manifest)
    tag = _TRAIN_BOUNDARY if task == "boundary" else _TRAIN_SPOOF
    rng = _rng(cfg.seed, tag)
    data = build_training_set(task, corpus, cfg, rng)
    model = train(data, cfg.train.to_train_config(), rng, task=task)
    models_dir = Path(models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    save_scorer(model, models_dir / f"scorer_{task}.bin")
    return model.final_loss


def _save_feat_stats(mean, std, path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"SGSTD1")
        fh.write(np.array([mean.size], dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(std, dtype="<f8").tobytes())


def _load_feat_stats(path):
    blob = Path(path).read_bytes()
    if blob[:6] != b"SGSTD1":
        raise DataError(f"{path}: not a feature-stats file")
    d = int(np.frombuffer(blob, dtype="<u4", count=1, offset=6)[0])
    mean = np.frombuffer(blob, dtype="<f8", count=d, offset=10).copy()
    std = np.frombuffer(blob, dtype="<f8", count=d, offset=10 + 8 * d).copy()
    return mean, std


def run_train_vae(cfg: PipelineConfig, manifest, models_dir) -> float:
    """Fit PCA + VAE on frames from genuine utterances only.

    Frames are standardized per dimension first: the raw feature scales are
    wildly unequal (the centroid is in Hz), which would let a single
    dimension absorb the whole 98% energy budget.
    """
    corpus = Corpus.open(manifest)
    genuine = corpus.by_class[GENUINE]
    if not genuine:
        raise DataError("no genuine utterances to train the density model on")
    mats = [features(corpus.load(e.utterance_id), cfg.grid).matrix for e in genuine]
    frames = np.vstack(mats)
    if frames.shape[0] > cfg.vae.max_frames:
        idx = _rng(cfg.seed, _TRAIN_VAE).choice(frames.shape[0], cfg.vae.max_frames,
                                                replace=False)
        frames = frames[np.sort(idx)]
    feat_mean = frames.mean(axis=0)
    feat_std = np.maximum(frames.std(axis=0), 1e-8)
    frames = (frames - feat_mean) / feat_std
    pca = fit_pca(frames, cfg.vae.energy_target)
    projected = pca_project(pca, frames)
    latent = min(cfg.vae.latent_dim, max(1, pca.k - 1))
    vcfg = VaeConfig(latent_dim=latent, lr=cfg.vae.lr, momentum=cfg.vae.momentum,
                     epochs=cfg.vae.epochs, batch=cfg.vae.batch)
    model = train_vae(projected, vcfg, _rng(cfg.seed, _TRAIN_VAE, 1))
    models_dir = Path(models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    save_pca(pca, models_dir / "pca.bin")
    save_vae(model, models_dir / "vae.bin")
    _save_feat_stats(feat_mean, feat_std, models_dir / "feat_stats.bin")
    return model.final_elbo


# ---------------------------------------------------------------- scoring

def _quantize(scores: FrameScores) -> FrameScores:
    # match the 6-decimal score-file precision so on-disk and in-process
    # scores yield identical downstream results
    probs = np.array([float(f"{p:.6f}") for p in scores.probs])
    return FrameScores(scores.utterance_id, scores.task, scores.hop_samples, probs)


def _init_scoring(manifest, models_dir, cfg: PipelineConfig, need_vae: bool,
                  need_scorers: bool = True):
    state = {"corpus": Corpus.open(manifest), "cfg": cfg}
    if need_scorers and models_dir is not None:
        state["models"] = {t: load_scorer(Path(models_dir) / f"scorer_{t}.bin")
                           for t in ("boundary", "spoof")}
    if need_vae:
        state["pca"] = load_pca(Path(models_dir) / "pca.bin")
        state["vae"] = load_vae(Path(models_dir) / "vae.bin")
        state["feat_stats"] = _load_feat_stats(Path(models_dir) / "feat_stats.bin")
    _worker_state.clear()
    _worker_state.update(state)


def _merged_scores(uid: str):
    corpus, cfg = _worker_state["corpus"], _worker_state["cfg"]
    w = corpus.load(uid)
    out = {}
    for task in ("boundary", "spoof"):
        out[task] = _quantize(score_utterance(w, _worker_state["models"][task],
                                              cfg.grid, uid))
    return out


def _score_one(uid: str):
    return uid, _merged_scores(uid)


def run_score(cfg: PipelineConfig, manifest, models_dir, scores_dir,
              jobs: int | None = None) -> list[str]:
    """Emit merged score files for every utterance and both tasks."""
    jobs = cfg.jobs if jobs is None else jobs
    corpus = Corpus.open(manifest)
    scores_dir = Path(scores_dir)
    scores_dir.mkdir(parents=True, exist_ok=True)
    results = _pmap(_score_one, corpus.ids(), jobs,
                    initializer=_init_scoring, initargs=(manifest, models_dir, cfg, False))
    written = []
    for uid, by_task in sorted(results):
        for task, scores in by_task.items():
            path = scores_dir / f"{uid}.{task}.score"
            write_scores(scores, path)
            written.append(str(path))
    return written


# ----------------------------------------------------------------- locate

def _locate_one(uid: str):
    corpus, cfg = _worker_state["corpus"], _worker_state["cfg"]
    entry = corpus.entry(uid)
    nf = n_frames(entry.n_samples, cfg.grid)
    if "scores_dir" in _worker_state:
        sdir = _worker_state["scores_dir"]
        by_task = {}
        for task in ("boundary", "spoof"):
            path = Path(sdir) / f"{uid}.{task}.score"
            scores = read_scores(path)
            if len(scores) != nf:
                raise DataError(f"{path}: {len(scores)} frames, expected {nf}")
            by_task[task] = scores
    else:
        by_task = _merged_scores(uid)
    bscores = by_task["boundary"]
    bounds = [b for b in detect_boundaries(bscores, cfg.detect)
              if 0 < b.frame_index < nf]
    segs = segment(bounds, nf)
    flags = classify_frames(by_task["spoof"], cfg.fusion)
    verdict = fuse(uid, segs, flags, cfg.fusion)
    max_prob = float(bscores.probs.max()) if len(bscores) else 0.0
    return uid, verdict, len(bounds), max_prob


def _deviation_one(uid: str):
    corpus, cfg = _worker_state["corpus"], _worker_state["cfg"]
    feats = features(corpus.load(uid), cfg.grid)
    mean, std = _worker_state["feat_stats"]
    projected = pca_project(_worker_state["pca"], (feats.matrix - mean) / std)
    score = reconstruction_probability(_worker_state["vae"], projected,
                                       cfg.vae.mc_samples,
                                       _rng(cfg.seed, _VAE_NOISE))
    return uid, score


def run_locate(cfg: PipelineConfig, manifest, out_dir, models_dir=None,
               scores_dir=None, jobs: int | None = None):
    """Windows -> merge -> boundaries -> fusion -> VAE override -> submission."""
    jobs = cfg.jobs if jobs is None else jobs
    if models_dir is None and scores_dir is None:
        raise DataError("locate needs either a models dir or a scores dir")
    if cfg.apply_vae and models_dir is None:
        raise DataError("the VAE override needs a models dir (or set apply_vae=false)")
    corpus = Corpus.open(manifest)
    ids = corpus.ids()

    def init():
        _init_scoring(manifest, models_dir, cfg, cfg.apply_vae,
                      need_scorers=scores_dir is None)
        if scores_dir is not None:
            _worker_state["scores_dir"] = Path(scores_dir)

    results = _pmap(_locate_one, ids, jobs, initializer=init)
    verdicts = {uid: v for uid, v, _, _ in results}
    counts = {uid: c for uid, _, c, _ in results}
    boundary_scores = {uid: p for uid, _, _, p in results}

    if cfg.apply_vae:
        pooled = [u for u in ids if counts[u] <= cfg.fusion.vae_min_boundaries
                  or counts[u] > cfg.fusion.vae_max_boundaries]
        devs = dict(_pmap(_deviation_one, pooled, jobs, initializer=init))
        verdicts = apply_vae_override(verdicts, counts, devs, cfg.fusion)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_submission(verdicts.values(), out_dir / "submission.tsv")
    write_boundary_scores(boundary_scores, out_dir / "boundary_scores.tsv")
    return verdicts


def write_boundary_scores(scores: dict, path) -> None:
    lines = [f"{uid}\t{scores[uid]:.6f}" for uid in sorted(scores)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_boundary_scores(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: boundary scores not found")
    out = {}
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        bits = line.split("\t")
        if len(bits) != 2:
            raise DataError(f"{path}:{ln}: expected id<TAB>score")
        try:
            out[bits[0]] = float(bits[1])
        except ValueError:
            raise DataError(f"{path}:{ln}: bad score {bits[1]!r}")
    return out


# --------------------------------------------------------------- evaluate

def run_evaluate(cfg: PipelineConfig, manifest, submission, out_dir,
                 boundary_scores_path=None, figures: bool = True):
    from .fusion import read_submission
    entries = read_manifest(manifest)
    verdicts = read_submission(submission)
    bscores = read_boundary_scores(boundary_scores_path) if boundary_scores_path else None
    report = evaluate_submission(entries, verdicts, cfg.grid, bscores,
                                 cfg.fusion.add_weights)
    write_report(report, out_dir)
    if figures:
        render_figures(report, out_dir)
    return report
