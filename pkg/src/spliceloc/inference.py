"""Sliding-window inference: plan overlapping clips, merge per-clip frame
posteriors by averaging, pick boundaries from the merged track, and turn
boundaries into segments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import FrameFeatures, FrameGridSpec, Waveform, extract_clip, features, n_frames
from .scorer import FrameScores, ScorerModel, score_clip


@dataclass(frozen=True)
class WindowPlan:
    """Start offsets of the clips covering one utterance."""

    offsets: list[int]
    window_samples: int
    step_samples: int

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ValueError("offsets must be strictly increasing")


@dataclass(frozen=True)
class Boundary:
    frame_index: int
    peak_prob: float

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")
        if not 0.0 <= self.peak_prob <= 1.0:
            raise ValueError("peak_prob must lie in [0, 1]")


@dataclass(frozen=True)
class DetectConfig:
    threshold: float = 0.5
    min_gap_frames: int = 8


def plan_windows(n_samples: int, grid: FrameGridSpec) -> WindowPlan:
    """Regular offsets every step; a short tail is replaced by one window
    aligned to end at the signal end. Inputs shorter than the window get a
    single window (filled by cyclic padding at extraction time)."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    window, step = grid.window_samples, grid.step_samples
    if n_samples <= window:
        return WindowPlan([0], window, step)
    offsets = []
    off = 0
    while off + window <= n_samples:
        offsets.append(off)
        off += step
    if offsets[-1] + window < n_samples:
        offsets.append(n_samples - window)
    return WindowPlan(offsets, window, step)


def merge_scores(per_clip, nf: int, grid: FrameGridSpec) -> FrameScores:
    """Average overlapping per-clip posteriors onto the utterance frame grid.

    `per_clip` is a list of (offset, FrameScores); offsets must be
    multiples of the hop so clip grids align with the utterance grid.
    Clip frames mapping past the utterance grid (tail padding) are dropped.
    """
    if not per_clip:
        raise ValueError("no clip scores to merge")
    hop = grid.hop_samples
    acc = np.zeros(nf)
    cnt = np.zeros(nf, dtype=np.int64)
    lo = np.full(nf, np.inf)
    hi = np.full(nf, -np.inf)
    task = per_clip[0][1].task
    uid = per_clip[0][1].utterance_id
    for offset, scores in per_clip:
        if offset % hop != 0:
            raise ValueError(f"clip offset {offset} not aligned to hop {hop}")
        if scores.task != task:
            raise ValueError("mixed tasks in merge")
        f0 = offset // hop
        for j, p in enumerate(scores.probs):
            uf = f0 + j
            if 0 <= uf < nf:
                acc[uf] += p
                cnt[uf] += 1
                lo[uf] = min(lo[uf], p)
                hi[uf] = max(hi[uf], p)
    if np.any(cnt == 0):
        missing = int(np.flatnonzero(cnt == 0)[0])
        raise ValueError(f"utterance frame {missing} not covered by any clip")
    # identical covering values stay bit-exact; otherwise the float mean is
    # clamped into the covering range it mathematically lies in
    merged = np.where(lo == hi, lo, np.clip(acc / cnt, lo, hi))
    return FrameScores(uid, task, hop, merged)


def detect_boundaries(scores: FrameScores, cfg: DetectConfig = DetectConfig()):
    """Threshold + peak picking with greedy non-maximum suppression.

    Candidates are local maxima at or above the threshold; candidates are
    accepted in descending probability order, suppressing anything within
    min_gap_frames of an accepted boundary. Returned sorted by frame.
    """
    if scores.task != "boundary":
        raise ValueError("detect_boundaries expects boundary-task scores")
    p = scores.probs
    n = p.size
    cand = []
    for i in range(n):
        if p[i] < cfg.threshold:
            continue
        if (i == 0 or p[i] >= p[i - 1]) and (i == n - 1 or p[i] >= p[i + 1]):
            cand.append(i)
    accepted = []
    for i in sorted(cand, key=lambda i: (-p[i], i)):
        if all(abs(i - j) >= cfg.min_gap_frames for j in accepted):
            accepted.append(i)
    return [Boundary(i, float(p[i])) for i in sorted(accepted)]


def segment(boundaries, nf: int):
    """Half-open frame intervals between consecutive boundaries."""
    cuts = [b.frame_index if isinstance(b, Boundary) else int(b) for b in boundaries]
    if cuts != sorted(cuts) or len(set(cuts)) != len(cuts):
        raise ValueError("boundaries must be strictly increasing")
    if any(c <= 0 or c >= nf for c in cuts):
        raise ValueError("boundaries must lie strictly inside (0, n_frames)")
    edges = [0] + cuts + [nf]
    return [(a, b) for a, b in zip(edges, edges[1:])]


def score_utterance(w: Waveform, model: ScorerModel, grid: FrameGridSpec,
                    utterance_id: str = "") -> FrameScores:
    """Slide windows over an utterance, score each clip, merge by averaging.

    Planned tail offsets are snapped down to the frame grid before
    extraction so every clip aligns with the utterance grid (the snapped
    tail still covers the last complete frame).
    """
    plan = plan_windows(len(w), grid)
    hop = grid.hop_samples
    per_clip = []
    for off in plan.offsets:
        aligned = (off // hop) * hop
        clip = extract_clip(w, aligned, grid.window_samples) if aligned < len(w) \
            else extract_clip(w, 0, grid.window_samples)
        feats = features(clip, grid)
        per_clip.append((aligned, score_clip(model, feats, utterance_id, hop)))
    return merge_scores(per_clip, n_frames(len(w), grid), grid)
