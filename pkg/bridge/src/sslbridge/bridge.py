"""Train the frame head over frozen backbone features and export score files
in the localization pipeline's format."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile

from .backbone import HOP_SAMPLES, extract_frames, feature_dim, load_backbone
from .formats import Entry, read_manifest, write_score_file
from .head import FrameHead, frame_probs
from .labeling import boundary_targets, spoof_targets, window_view

WINDOW_SAMPLES = 20480
STEP_SAMPLES = 10240
T = WINDOW_SAMPLES // HOP_SAMPLES


@dataclass(frozen=True)
class BridgeConfig:
    backbone: str = "wav2vec-base"
    task: str = "both"            # boundary | spoof | both
    pretrained: bool = False
    freeze: str = "always"        # desk-scale policy: the backbone stays frozen
    feature_layer: str = "conv"   # conv extractor output, or "final" encoder output
    epochs: int = 15
    batch: int = 32
    lr: float = 3e-4
    weight_decay: float = 1e-4
    boundary_pos_weight: float = 3.0
    feature_noise: float = 0.05
    head_width: int = 256
    train_windows: int = 1200
    out_dir: str = "scores"
    seed: int = 7


def _prep_features(feats: torch.Tensor, task: str) -> torch.Tensor:
    """Boundary features are instance-normalized per window and channel:
    static speaker/channel character cancels out and only transitions
    remain, which generalizes far better across unseen sources. The spoof
    signature is itself static, so that task keeps raw features."""
    if task != "boundary":
        return feats
    mean = feats.mean(dim=1, keepdim=True)
    std = feats.std(dim=1, keepdim=True) + 1e-5
    return (feats - mean) / std


def load_config(path) -> BridgeConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(Path(path).read_text(encoding="utf-8"))
    if not parser.has_section("bridge"):
        raise ValueError(f"{path}: missing [bridge] section")
    base = BridgeConfig()
    kw = {}
    for key, value in parser.items("bridge"):
        if not hasattr(base, key):
            raise ValueError(f"{path}: unknown key {key!r}")
        current = getattr(base, key)
        if isinstance(current, bool):
            kw[key] = parser.getboolean("bridge", key)
        else:
            kw[key] = type(current)(value)
    return replace(base, **kw)


def _load_wav(path) -> np.ndarray:
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    return data.astype(np.float32)


class WaveStore:
    def __init__(self, entries, root):
        self.root = Path(root)
        self.entries = {e.utterance_id: e for e in entries}
        self._cache = {}

    def load(self, uid: str) -> np.ndarray:
        if uid not in self._cache:
            self._cache[uid] = _load_wav(self.root / self.entries[uid].path)
        return self._cache[uid]


def _sample_windows(entries, store: WaveStore, n_windows: int, rng: np.random.Generator):
    """(wave, regions-in-window, boundaries-in-window) triples for training.

    Half of the draws come from partially fake utterances so boundary
    positives show up often enough.
    """
    partial = [e for e in entries if e.klass == "partial_fake"]
    out = []
    for _ in range(n_windows):
        pool = partial if (partial and rng.random() < 0.5) else entries
        e = pool[int(rng.integers(len(pool)))]
        w = store.load(e.utterance_id)
        if len(w) <= WINDOW_SAMPLES:
            wave = np.resize(w, WINDOW_SAMPLES)
            regions = [(0, WINDOW_SAMPLES, e.regions[0][2])]
            bounds = []
        else:
            start = int(rng.integers(0, len(w) - WINDOW_SAMPLES + 1))
            wave = w[start:start + WINDOW_SAMPLES]
            regions, bounds = window_view(e.regions, start, start + WINDOW_SAMPLES)
        out.append((wave, regions, bounds))
    return out


def _cache_features(model, windows, batch: int, layer: str) -> torch.Tensor:
    feats = []
    for lo in range(0, len(windows), batch):
        chunk = np.stack([w for w, _, _ in windows[lo:lo + batch]])
        feats.append(extract_frames(model, chunk, T, layer=layer))
    return torch.cat(feats)


def train_head(cfg: BridgeConfig, task: str, entries, store: WaveStore,
               backbone, feat_dim: int) -> FrameHead:
    torch.manual_seed(cfg.seed + (1 if task == "boundary" else 2))
    rng = np.random.default_rng([cfg.seed, 0 if task == "boundary" else 1])
    windows = _sample_windows(entries, store, cfg.train_windows, rng)
    feats = _prep_features(_cache_features(backbone, windows, 16, cfg.feature_layer), task)
    if task == "boundary":
        targets = torch.from_numpy(np.stack(
            [boundary_targets(b, T, HOP_SAMPLES) for _, _, b in windows]))
        head = FrameHead(feat_dim, 1, width=cfg.head_width)
        loss_fn = torch.nn.BCEWithLogitsLoss(
            pos_weight=torch.tensor(cfg.boundary_pos_weight))
    else:
        targets = torch.from_numpy(np.stack(
            [spoof_targets(r, T, HOP_SAMPLES) for _, r, _ in windows]))
        head = FrameHead(feat_dim, 2, width=cfg.head_width)
        loss_fn = torch.nn.CrossEntropyLoss()
    opt = torch.optim.Adam(head.parameters(), lr=cfg.lr,
                           weight_decay=cfg.weight_decay)
    n = feats.shape[0]
    noise_gen = torch.Generator().manual_seed(cfg.seed + 17)
    head.train()
    for _ in range(cfg.epochs):
        order = torch.from_numpy(rng.permutation(n))
        for lo in range(0, n, cfg.batch):
            idx = order[lo:lo + cfg.batch]
            x = feats[idx]
            if cfg.feature_noise > 0:
                x = x + cfg.feature_noise * torch.randn(x.shape, generator=noise_gen)
            logits = head(x)
            if task == "boundary":
                loss = loss_fn(logits[..., 0], targets[idx])
            else:
                loss = loss_fn(logits.reshape(-1, 2), targets[idx].reshape(-1))
            opt.zero_grad()
            loss.backward()
            opt.step()
    head.eval()
    return head


def _plan_offsets(n_samples: int) -> list[int]:
    if n_samples <= WINDOW_SAMPLES:
        return [0]
    offsets = list(range(0, n_samples - WINDOW_SAMPLES + 1, STEP_SAMPLES))
    if offsets[-1] + WINDOW_SAMPLES < n_samples:
        tail = ((n_samples - WINDOW_SAMPLES) // HOP_SAMPLES) * HOP_SAMPLES
        if tail > offsets[-1]:
            offsets.append(tail)
    return offsets


def export_utterance(uid: str, wave: np.ndarray, head: FrameHead, backbone,
                     task: str, batch: int, layer: str = "conv") -> np.ndarray:
    """Merged per-frame probabilities for one utterance (overlap averaging)."""
    nf = len(wave) // HOP_SAMPLES
    offsets = _plan_offsets(len(wave))
    clips = []
    for off in offsets:
        clip = wave[off:off + WINDOW_SAMPLES]
        if clip.size < WINDOW_SAMPLES:
            clip = np.resize(clip, WINDOW_SAMPLES)
        clips.append(clip)
    acc = np.zeros(nf)
    cnt = np.zeros(nf, dtype=np.int64)
    for lo in range(0, len(clips), batch):
        feats = _prep_features(
            extract_frames(backbone, np.stack(clips[lo:lo + batch]), T, layer=layer), task)
        probs = frame_probs(head, feats, task).numpy()
        for row, off in enumerate(offsets[lo:lo + batch]):
            f0 = off // HOP_SAMPLES
            for j in range(T):
                if f0 + j < nf:
                    acc[f0 + j] += probs[row, j]
                    cnt[f0 + j] += 1
    return acc / np.maximum(cnt, 1)


def export_scores(cfg: BridgeConfig, manifest_path, out_dir=None,
                  train_manifest_path=None) -> list[Path]:
    """Train heads on the training manifest (defaults to the export
    manifest) and write one score file per (utterance, task)."""
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    store = WaveStore(entries, manifest_path.parent)
    if train_manifest_path is None:
        train_entries, train_store = entries, store
    else:
        train_manifest_path = Path(train_manifest_path)
        train_entries = read_manifest(train_manifest_path)
        train_store = WaveStore(train_entries, train_manifest_path.parent)
    backbone, _ = load_backbone(cfg.backbone, cfg.pretrained, cfg.seed)
    feat_dim = feature_dim(cfg.backbone, cfg.feature_layer)
    tasks = ("boundary", "spoof") if cfg.task == "both" else (cfg.task,)
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for task in tasks:
        head = train_head(cfg, task, train_entries, train_store, backbone, feat_dim)
        for e in entries:
            probs = export_utterance(e.utterance_id, store.load(e.utterance_id),
                                     head, backbone, task, cfg.batch,
                                     cfg.feature_layer)
            path = out_dir / f"{e.utterance_id}.{task}.score"
            write_score_file(path, e.utterance_id, task, HOP_SAMPLES, probs)
            written.append(path)
    return written
