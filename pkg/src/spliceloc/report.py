"""Evaluation report: compare a submission against manifest ground truth,
write the delimited report files, and render summary figures next to them."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .audio import FrameGridSpec, n_frames
from .errors import DataError
from .forge import FAKE, GENUINE, ManifestEntry, spoof_labels
from .metrics import (
    FrameConfusion,
    ScoredTrial,
    add_score,
    confusion_from_frames,
    eer,
    f1,
    sentence_accuracy,
)

BOUNDARY_TOL_FRAMES = 2


@dataclass(frozen=True)
class MetricsReport:
    a: float
    f1_genuine: float
    f1_star: float
    add: float
    eer_boundary: float | None
    boundary_recovery: float | None
    confusion_fake: FrameConfusion
    sentence_counts: dict
    fake_fraction_pairs: list     # (true, predicted) per utterance
    boundary_trials: list


def _frame_label_vector(regions, nf: int, grid: FrameGridSpec):
    spoof = spoof_labels(regions, nf, grid).labels
    return np.where(spoof == 1, GENUINE, FAKE)


def _verdict_frame_labels(verdict, nf: int):
    if verdict.n_frames != nf:
        raise DataError(
            f"{verdict.utterance_id}: submission covers {verdict.n_frames} frames, "
            f"manifest implies {nf}")
    out = np.empty(nf, dtype=object)
    for seg in verdict.segments:
        out[seg.start_frame:seg.end_frame] = seg.label
    return out


def evaluate_submission(entries, verdicts: dict, grid: FrameGridSpec,
                        boundary_scores: dict | None = None,
                        add_weights=(0.3, 0.7)) -> MetricsReport:
    """Score a submission: sentence accuracy, frame F1 both ways, the
    weighted final score, boundary recovery, and (when utterance-level
    boundary scores are supplied) the boundary-detection EER."""
    truths, preds = {}, {}
    pred_frames, true_frames = [], []
    pairs = []
    recovered = total_bounds = 0
    trials = []
    for entry in entries:
        uid = entry.utterance_id
        if uid not in verdicts:
            raise DataError(f"submission missing utterance {uid!r}")
        v = verdicts[uid]
        nf = n_frames(entry.n_samples, grid)
        truths[uid] = FAKE if entry.is_fake_sentence else GENUINE
        preds[uid] = v.utterance_label
        tf = _frame_label_vector(entry.regions, nf, grid)
        pf = _verdict_frame_labels(v, nf)
        true_frames.append(tf)
        pred_frames.append(pf)
        pairs.append((float(np.mean(tf == FAKE)), float(np.mean(pf == FAKE))))

        true_bound_frames = [b // grid.hop_samples for b in entry.boundaries]
        pred_bound_frames = [s.start_frame for s in v.segments[1:]]
        total_bounds += len(true_bound_frames)
        for bf in true_bound_frames:
            if any(abs(bf - p) <= BOUNDARY_TOL_FRAMES for p in pred_bound_frames):
                recovered += 1
        if boundary_scores is not None:
            if uid not in boundary_scores:
                raise DataError(f"boundary score missing for utterance {uid!r}")
            trials.append(ScoredTrial(boundary_scores[uid], len(entry.boundaries) > 0))

    extra = set(verdicts) - set(truths)
    if extra:
        raise DataError(f"submission has unknown utterance {sorted(extra)[0]!r}")

    tf = np.concatenate(true_frames)
    pf = np.concatenate(pred_frames)
    conf_fake = confusion_from_frames(pf, tf, FAKE)
    conf_gen = confusion_from_frames(pf, tf, GENUINE)
    a = sentence_accuracy(preds, truths)
    f1s = f1(conf_fake)
    counts = {}
    for uid in truths:
        key = (truths[uid], preds[uid])
        counts[key] = counts.get(key, 0) + 1
    return MetricsReport(
        a=a,
        f1_genuine=f1(conf_gen),
        f1_star=f1s,
        add=add_score(a, f1s, add_weights),
        eer_boundary=eer(trials) if trials else None,
        boundary_recovery=(recovered / total_bounds) if total_bounds else None,
        confusion_fake=conf_fake,
        sentence_counts=counts,
        fake_fraction_pairs=pairs,
        boundary_trials=trials,
    )


def write_report(report: MetricsReport, out_dir) -> None:
    """Write report.txt (key=value) and report.tsv (metric<TAB>value)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = [
        ("A", report.a),
        ("F1", report.f1_genuine),
        ("F1star", report.f1_star),
        ("ADD", report.add),
        ("EER_boundary", report.eer_boundary),
        ("BoundaryRecovery", report.boundary_recovery),
    ]
    def fmt(v):
        return "NA" if v is None else f"{v:.4f}"
    (out_dir / "report.txt").write_text(
        "".join(f"{k}={fmt(v)}\n" for k, v in items), encoding="utf-8")
    (out_dir / "report.tsv").write_text(
        "".join(f"{k}\t{fmt(v)}\n" for k, v in items), encoding="utf-8")


def render_figures(report: MetricsReport, out_dir) -> list[Path]:
    """Render the summary figures alongside the delimited report files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    names = ["A", "F1", "F1*", "ADD"]
    values = [report.a, report.f1_genuine, report.f1_star, report.add]
    if report.eer_boundary is not None:
        names.append("EER(bdr)")
        values.append(report.eer_boundary)
    bars = ax.bar(names, values, color="#4878a8")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("value")
    ax.set_title("Evaluation summary")
    for b, v in zip(bars, values):
        ax.text(b.get_x() + b.get_width() / 2, v + 0.02, f"{v:.3f}",
                ha="center", fontsize=9)
    paths.append(_save(fig, out_dir / "metrics_summary.png"))

    fig, ax = plt.subplots(figsize=(4.5, 4))
    mat = np.zeros((2, 2))
    for (t, p), c in report.sentence_counts.items():
        mat[int(t == FAKE), int(p == FAKE)] = c
    im = ax.imshow(mat, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, int(mat[i, j]), ha="center", va="center")
    ax.set_xticks([0, 1], ["pred genuine", "pred fake"])
    ax.set_yticks([0, 1], ["true genuine", "true fake"])
    ax.set_title("Sentence-level confusion")
    fig.colorbar(im, ax=ax, shrink=0.8)
    paths.append(_save(fig, out_dir / "sentence_confusion.png"))

    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    t = [p[0] for p in report.fake_fraction_pairs]
    p = [p[1] for p in report.fake_fraction_pairs]
    ax.scatter(t, p, s=12, alpha=0.5, color="#a84848")
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("true fake-frame fraction")
    ax.set_ylabel("predicted fake-frame fraction")
    ax.set_title("Per-utterance fake fraction")
    paths.append(_save(fig, out_dir / "fake_fraction_scatter.png"))

    if report.boundary_trials:
        fig, ax = plt.subplots(figsize=(6, 4))
        tar = [t.score for t in report.boundary_trials if t.is_target]
        non = [t.score for t in report.boundary_trials if not t.is_target]
        bins = np.linspace(0, 1, 30)
        ax.hist(non, bins=bins, alpha=0.6, label="no boundary", color="#4878a8")
        ax.hist(tar, bins=bins, alpha=0.6, label="has boundary", color="#a84848")
        ax.set_xlabel("max merged boundary posterior")
        ax.set_ylabel("utterances")
        ax.legend()
        ax.set_title("Boundary score distributions")
        paths.append(_save(fig, out_dir / "boundary_scores_hist.png"))
    return paths


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
