"""Segment-level decision logic and the VAE-based low-confidence override.

Frames are flagged fake when the spoof posterior (probability of genuine)
falls below 0.95; segment verdicts then depend on the segment count, and
utterances with no detected boundary or more than ten are rescored by the
genuine-density model.

Submission format (UTF-8, one line per utterance):
    utterance_id<TAB>label<TAB>region;region;...
with region = start_sec-end_sec-label, times printed to 2 decimals as
frame_index * 0.02.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .forge import FAKE, GENUINE
from .scorer import FrameScores
from .vae import rescore

FRAME_SECONDS = 0.02


@dataclass(frozen=True)
class FusionConfig:
    fake_proportion_ratio: float = 0.4
    frame_genuine_threshold: float = 0.95
    vae_min_boundaries: int = 0
    vae_max_boundaries: int = 10
    vae_fake_fraction: float = 0.45
    add_weights: tuple = (0.3, 0.7)

    def __post_init__(self):
        for v in (self.fake_proportion_ratio, self.frame_genuine_threshold,
                  self.vae_fake_fraction, *self.add_weights):
            if not 0.0 <= v <= 1.0:
                raise ValueError("fusion thresholds must lie in [0, 1]")


@dataclass(frozen=True)
class LabeledSegment:
    start_frame: int
    end_frame: int
    label: str


@dataclass(frozen=True)
class UtteranceVerdict:
    utterance_id: str
    segments: tuple
    utterance_label: str

    @property
    def n_frames(self) -> int:
        return self.segments[-1].end_frame


def classify_frames(spoof_scores: FrameScores, cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    """1 where a frame is called fake: P(genuine) strictly below threshold."""
    if spoof_scores.task != "spoof":
        raise ValueError("classify_frames expects spoof-task scores")
    return (spoof_scores.probs < cfg.frame_genuine_threshold).astype(np.uint8)


def fake_ratio(flags: np.ndarray, seg) -> float:
    start, end = seg
    if end <= start:
        raise ValueError("empty segment")
    return float(np.mean(flags[start:end]))


def fuse(utterance_id: str, segments, flags: np.ndarray,
         cfg: FusionConfig = FusionConfig()) -> UtteranceVerdict:
    """Label each segment by count-dependent rules, then the utterance.

    1 segment: fake iff its fake-frame ratio reaches the proportion
    threshold. 2 segments: the one whose ratio both exceeds the threshold
    and the other segment's ratio is fake; if neither qualifies, the
    shorter segment (first on equal length) is fake. 3 segments: the
    middle one is fake regardless of flags. More: each segment stands
    alone against the threshold.
    """
    segments = [tuple(s) for s in segments]
    if not segments or segments[0][0] != 0:
        raise DataError("segments must start at frame 0")
    for a, b in zip(segments, segments[1:]):
        if a[1] != b[0]:
            raise DataError("segments must tile the utterance")
    if segments[-1][1] != len(flags):
        raise DataError("segments must cover exactly the flagged frames")

    ratio = cfg.fake_proportion_ratio
    n = len(segments)
    if n == 1:
        labels = [FAKE if fake_ratio(flags, segments[0]) >= ratio else GENUINE]
    elif n == 2:
        r1, r2 = (fake_ratio(flags, s) for s in segments)
        if r1 > ratio and r1 > r2:
            labels = [FAKE, GENUINE]
        elif r2 > ratio and r2 > r1:
            labels = [GENUINE, FAKE]
        else:
            len1 = segments[0][1] - segments[0][0]
            len2 = segments[1][1] - segments[1][0]
            labels = [FAKE, GENUINE] if len1 <= len2 else [GENUINE, FAKE]
    elif n == 3:
        labels = [GENUINE, FAKE, GENUINE]
    else:
        labels = [FAKE if fake_ratio(flags, s) >= ratio else GENUINE for s in segments]

    segs = tuple(LabeledSegment(s[0], s[1], l) for s, l in zip(segments, labels))
    utt = FAKE if any(l == FAKE for l in labels) else GENUINE
    return UtteranceVerdict(utterance_id, segs, utt)


def apply_vae_override(verdicts: dict, boundary_counts: dict, deviation_scores: dict,
                       cfg: FusionConfig = FusionConfig()) -> dict:
    """Rescore low-confidence utterances with the genuine-density model.

    Pool membership: boundary count at or below the minimum, or above the
    maximum. Pooled single-segment utterances take the rescored label for
    the whole span; pooled multi-segment utterances keep their segment
    labels and only the utterance label is overridden.
    """
    pool = [uid for uid in verdicts
            if boundary_counts[uid] <= cfg.vae_min_boundaries
            or boundary_counts[uid] > cfg.vae_max_boundaries]
    if not pool:
        return dict(verdicts)
    missing = [u for u in pool if u not in deviation_scores]
    if missing:
        raise DataError(f"missing deviation score for pooled utterance {missing[0]!r}")
    vae_labels = rescore([(u, deviation_scores[u]) for u in pool], cfg.vae_fake_fraction)
    out = dict(verdicts)
    for uid in pool:
        v = out[uid]
        label = vae_labels[uid]
        if len(v.segments) == 1:
            seg = v.segments[0]
            out[uid] = UtteranceVerdict(
                uid, (LabeledSegment(seg.start_frame, seg.end_frame, label),), label)
        else:
            out[uid] = UtteranceVerdict(uid, v.segments, label)
    return out


# --------------------------------------------------------- submission file

def _sec(frame: int) -> str:
    return f"{frame * FRAME_SECONDS:.2f}"


def write_submission(verdicts, path) -> None:
    """One line per utterance, sorted by id for canonical output."""
    lines = []
    for v in sorted(verdicts, key=lambda v: v.utterance_id):
        regions = ";".join(
            f"{_sec(s.start_frame)}-{_sec(s.end_frame)}-{s.label}" for s in v.segments)
        lines.append(f"{v.utterance_id}\t{v.utterance_label}\t{regions}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_submission(path) -> dict[str, UtteranceVerdict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: submission not found")
    out = {}
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"{path}:{ln}: expected 3 tab-separated fields")
        uid, label, region_str = fields
        if label not in (GENUINE, FAKE):
            raise DataError(f"{path}:{ln}: bad utterance label {label!r}")
        segments = []
        pos = 0
        for tok in region_str.split(";"):
            bits = tok.split("-")
            if len(bits) != 3 or bits[2] not in (GENUINE, FAKE):
                raise DataError(f"{path}:{ln}: bad region {tok!r}")
            try:
                start = round(float(bits[0]) / FRAME_SECONDS)
                end = round(float(bits[1]) / FRAME_SECONDS)
            except ValueError:
                raise DataError(f"{path}:{ln}: bad region times {tok!r}")
            if start != pos or end <= start:
                raise DataError(f"{path}:{ln}: regions must tile the utterance")
            segments.append(LabeledSegment(start, end, bits[2]))
            pos = end
        if uid in out:
            raise DataError(f"{path}:{ln}: duplicate utterance {uid!r}")
        out[uid] = UtteranceVerdict(uid, tuple(segments), label)
    return out
