"""Frame-level posterior models.

A small fully connected network (20 -> 64 -> 64 -> 1, tanh hidden layers,
sigmoid output) trained with binary cross-entropy and SGD + momentum, plus
a finite-difference gradient checker and the score-file interchange format
that lets an external scorer substitute for the built-in one.

Score file format (UTF-8, one file per utterance and task):
    #id=<utterance_id> task=<boundary|spoof> hop=<int> n=<int>
    <frame_index><TAB><prob to 6 decimals>   (n lines)
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .audio import FrameFeatures
from .errors import DataError
from .forge import TASKS

DEFAULT_DIMS = (20, 64, 64)
PROB_EPS = 1e-9

MODEL_MAGIC = b"SGMLP1"


@dataclass
class ScorerModel:
    """MLP weights plus the feature standardization fitted on training data."""

    task: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feat_mean: np.ndarray
    feat_std: np.ndarray
    final_loss: float | None = None

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 30
    batch_clips: int = 64


@dataclass(frozen=True, eq=False)
class FrameScores:
    """Per-frame posteriors for one utterance and task."""

    utterance_id: str
    task: str
    hop_samples: int
    probs: np.ndarray

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1:
            raise ValueError("probs must be 1-D")
        if p.size and (p.min() < 0.0 or p.max() > 1.0):
            raise ValueError("probs must lie in [0, 1]")
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size


def init_model(task: str, rng: np.random.Generator, dims=DEFAULT_DIMS) -> ScorerModel:
    """Xavier-uniform initialization; output layer is a single logit."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    sizes = list(dims) + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    d = dims[0]
    return ScorerModel(task, weights, biases, np.zeros(d), np.ones(d))


def _forward(model: ScorerModel, x: np.ndarray):
    """Forward pass on standardized input; returns logits and activations."""
    acts = [x]
    h = x
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = z if i == n_layers - 1 else np.tanh(z)
        acts.append(h)
    return acts[-1][:, 0], acts


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def bce_loss_and_grads(model: ScorerModel, x: np.ndarray, y: np.ndarray):
    """Mean per-frame BCE and its analytic parameter gradients.

    `x` is the standardized feature matrix, `y` the 0/1 labels.
    """
    n = x.shape[0]
    logits, acts = _forward(model, x)
    loss = float(np.mean(_softplus(logits) - y * logits))
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    delta = ((expit(logits) - y) / n)[:, None]
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    return loss, {"w": grads_w, "b": grads_b}


def _standardize(model: ScorerModel, x: np.ndarray) -> np.ndarray:
    return (x - model.feat_mean) / model.feat_std


def train(dataset, config: TrainConfig, rng: np.random.Generator,
          task: str | None = None, dims=DEFAULT_DIMS) -> ScorerModel:
    """Fit the MLP on (FrameFeatures, FrameLabels) pairs.

    Mini-batches are whole clips; feature mean/std are estimated on the
    full training set and stored in the model. Deterministic given rng.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    if task is None:
        task = dataset[0][1].task
    feats = [np.asarray(f.matrix, dtype=np.float64) for f, _ in dataset]
    labels = [np.asarray(l.labels, dtype=np.float64) for _, l in dataset]
    all_x = np.vstack(feats)
    model = init_model(task, rng, dims)
    model.feat_mean = all_x.mean(axis=0)
    model.feat_std = np.maximum(all_x.std(axis=0), 1e-8)

    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    n_clips = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n_clips)
        for bi, lo in enumerate(range(0, n_clips, config.batch_clips)):
            idx = order[lo:lo + config.batch_clips]
            x = _standardize(model, np.vstack([feats[i] for i in idx]))
            y = np.concatenate([labels[i] for i in idx])
            loss, grads = bce_loss_and_grads(model, x, y)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {bi}")
            for i in range(len(model.weights)):
                vel_w[i] = config.momentum * vel_w[i] - config.lr * grads["w"][i]
                vel_b[i] = config.momentum * vel_b[i] - config.lr * grads["b"][i]
                model.weights[i] += vel_w[i]
                model.biases[i] += vel_b[i]
    x = _standardize(model, all_x)
    y = np.concatenate(labels)
    model.final_loss, _ = bce_loss_and_grads(model, x, y)
    return model


def _flat_params(model: ScorerModel):
    arrays = []
    for w, b in zip(model.weights, model.biases):
        arrays.extend([w, b])
    return arrays


def gradient_check(model: ScorerModel, batch, h: float = 1e-5,
                   n_params: int = 200, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    `batch` is (features, labels) in raw feature space; at least `n_params`
    randomly chosen parameters are perturbed.
    """
    x_raw, y = batch
    if getattr(x_raw, "size", len(x_raw)) == 0:
        raise ValueError("empty batch")
    x = _standardize(model, np.asarray(x_raw, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    _, grads = bce_loss_and_grads(model, x, y)
    arrays = _flat_params(model)
    grad_arrays = []
    for gw, gb in zip(grads["w"], grads["b"]):
        grad_arrays.extend([gw, gb])

    rng = np.random.default_rng(seed)
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
        lp, _ = bce_loss_and_grads(model, x, y)
        arr[local] = orig - h
        lm, _ = bce_loss_and_grads(model, x, y)
        arr[local] = orig
        fd = (lp - lm) / (2 * h)
        ana = grad_arrays[ai].reshape(-1)[local]
        err = abs(ana - fd) / max(abs(ana) + abs(fd), 1e-6)
        max_err = max(max_err, err)
    return max_err


def score_clip(model: ScorerModel, feats: FrameFeatures,
               utterance_id: str = "", hop_samples: int = 320) -> FrameScores:
    """One posterior per frame, each depending only on that frame's features."""
    if feats.dim != model.input_dim:
        raise ValueError(f"feature dim {feats.dim} != model input dim {model.input_dim}")
    logits, _ = _forward(model, _standardize(model, feats.matrix))
    probs = np.clip(expit(logits), PROB_EPS, 1.0 - PROB_EPS)
    return FrameScores(utterance_id, model.task, hop_samples, probs)


# ------------------------------------------------------------ score files

_HEADER_RE = re.compile(r"^#id=(\S+) task=(boundary|spoof) hop=(\d+) n=(\d+)$")


def write_scores(scores: FrameScores, path) -> None:
    lines = [f"#id={scores.utterance_id} task={scores.task} "
             f"hop={scores.hop_samples} n={len(scores)}"]
    for i, p in enumerate(scores.probs):
        lines.append(f"{i}\t{p:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scores(path) -> FrameScores:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: score file not found")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path}:1: missing header")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise DataError(f"{path}:1: malformed header")
    uid, task, hop, n = m.group(1), m.group(2), int(m.group(3)), int(m.group(4))
    body = [l for l in lines[1:] if l.strip()]
    if len(body) != n:
        raise DataError(f"{path}: declared n={n} but found {len(body)} frames")
    probs = np.empty(n)
    for i, line in enumerate(body):
        ln = i + 2
        bits = line.split("\t")
        if len(bits) != 2:
            raise DataError(f"{path}:{ln}: expected frame_index<TAB>prob")
        try:
            idx, p = int(bits[0]), float(bits[1])
        except ValueError:
            raise DataError(f"{path}:{ln}: malformed values")
        if idx != i:
            raise DataError(f"{path}:{ln}: frame index {idx} out of order")
        if not 0.0 <= p <= 1.0:
            raise DataError(f"{path}:{ln}: prob {p} outside [0, 1]")
        probs[i] = p
    return FrameScores(uid, task, hop, probs)


# --------------------------------------------------------- model files

def save_scorer(model: ScorerModel, path) -> None:
    """Binary model blob: magic, task, layer sizes, normalization, weights."""
    sizes = [model.input_dim] + [w.shape[1] for w in model.weights]
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<B", TASKS.index(model.task)))
        fh.write(struct.pack("<I", len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        loss = model.final_loss if model.final_loss is not None else float("nan")
        fh.write(struct.pack("<d", loss))
        for arr in [model.feat_mean, model.feat_std] + _flat_params(model):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_scorer(path) -> ScorerModel:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc}")
    if blob[:6] != MODEL_MAGIC:
        raise DataError(f"{path}: not a scorer model file")
    off = 6
    task_idx, n_sizes = struct.unpack_from("<BI", blob, off)
    off += 5
    sizes = struct.unpack_from(f"<{n_sizes}I", blob, off)
    off += 4 * n_sizes
    (loss,) = struct.unpack_from("<d", blob, off)
    off += 8

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += 8 * count
        return arr

    d = sizes[0]
    mean, std = take((d,)), take((d,))
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weights.append(take((fan_in, fan_out)))
        biases.append(take((fan_out,)))
    model = ScorerModel(TASKS[task_idx], weights, biases, mean, std,
                        None if np.isnan(loss) else loss)
    return model
