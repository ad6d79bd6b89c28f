import numpy as np
import pytest

from spliceloc.errors import DataError
from spliceloc.fusion import (
    FusionConfig,
    LabeledSegment,
    UtteranceVerdict,
    apply_vae_override,
    classify_frames,
    fake_ratio,
    fuse,
    read_submission,
    write_submission,
)
from spliceloc.scorer import FrameScores


def _spoof(probs):
    return FrameScores("u", "spoof", 320, np.asarray(probs, dtype=float))


def _flags(ratios_and_lengths):
    """Build a flag vector with the requested per-segment fake ratios."""
    flags, segs, pos = [], [], 0
    for ratio, length in ratios_and_lengths:
        k = int(round(ratio * length))
        flags.extend([1] * k + [0] * (length - k))
        segs.append((pos, pos + length))
        pos += length
    return np.array(flags, dtype=np.uint8), segs


# ------------------------------------------------------- frame classification

def test_classify_frames_strict_threshold():
    out = classify_frames(_spoof([0.99, 0.94, 0.95]))
    assert out.tolist() == [0, 1, 0]


def test_classify_frames_all_confident():
    assert classify_frames(_spoof([1.0, 1.0, 1.0])).sum() == 0


def test_classify_frames_zero_threshold():
    cfg = FusionConfig(frame_genuine_threshold=0.0)
    assert classify_frames(_spoof([0.1, 0.0, 0.9]), cfg).sum() == 0


def test_classify_frames_task_guard():
    with pytest.raises(ValueError):
        classify_frames(FrameScores("u", "boundary", 320, np.zeros(4)))


# ------------------------------------------------------------- fake ratio

def test_fake_ratio_basics():
    flags = np.array([1] * 10, dtype=np.uint8)
    assert fake_ratio(flags, (0, 10)) == 1.0
    flags = np.array([1, 1, 1] + [0] * 7, dtype=np.uint8)
    assert fake_ratio(flags, (0, 10)) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        fake_ratio(flags, (5, 5))


def test_fake_ratio_counting_oracle():
    rng = np.random.default_rng(0)
    flags = (rng.random(200) < 0.37).astype(np.uint8)
    for _ in range(100):
        a = int(rng.integers(0, 199))
        b = int(rng.integers(a + 1, 201))
        assert fake_ratio(flags, (a, b)) == pytest.approx(sum(flags[a:b]) / (b - a))


# ------------------------------------------------------- decision table

def test_fuse_one_segment_genuine():
    flags, segs = _flags([(0.3, 100)])
    v = fuse("u", segs, flags)
    assert v.utterance_label == "genuine"
    assert v.segments[0].label == "genuine"


def test_fuse_one_segment_fake_at_threshold():
    flags, segs = _flags([(0.4, 100)])
    assert fuse("u", segs, flags).utterance_label == "fake"


def test_fuse_two_segments_dominant_ratio():
    flags, segs = _flags([(0.7, 100), (0.1, 100)])
    v = fuse("u", segs, flags)
    assert [s.label for s in v.segments] == ["fake", "genuine"]
    assert v.utterance_label == "fake"


def test_fuse_two_segments_shorter_rule():
    flags, segs = _flags([(0.2, 100), (0.3, 40)])
    v = fuse("u", segs, flags)
    assert [s.label for s in v.segments] == ["genuine", "fake"]


def test_fuse_two_segments_symmetry_and_tie():
    flags, segs = _flags([(0.1, 50), (0.7, 80)])
    assert [s.label for s in fuse("u", segs, flags).segments] == ["genuine", "fake"]
    flags2, segs2 = _flags([(0.7, 80), (0.1, 50)])
    assert [s.label for s in fuse("u", segs2, flags2).segments] == ["fake", "genuine"]
    # tie path with equal lengths: the first segment is fake
    flags3, segs3 = _flags([(0.2, 60), (0.2, 60)])
    assert [s.label for s in fuse("u", segs3, flags3).segments] == ["fake", "genuine"]


def test_fuse_three_segments_middle_fake_ignores_flags():
    for ratios in [(0.0, 0.0, 0.0), (0.9, 0.0, 0.9), (0.5, 0.5, 0.5)]:
        flags, segs = _flags([(r, 50) for r in ratios])
        v = fuse("u", segs, flags)
        assert [s.label for s in v.segments] == ["genuine", "fake", "genuine"]
        assert v.utterance_label == "fake"


def test_fuse_five_segments_per_segment_rule():
    flags, segs = _flags([(0.1, 40), (0.8, 40), (0.05, 40), (0.5, 40), (0.2, 40)])
    v = fuse("u", segs, flags)
    assert [s.label for s in v.segments] == ["genuine", "fake", "genuine", "fake", "genuine"]


def test_fuse_label_iff_any_fake_property():
    rng = np.random.default_rng(1)
    for _ in range(200):
        k = int(rng.integers(1, 7))
        lengths = rng.integers(3, 40, k)
        flags, segs = _flags([(float(rng.random()), int(l)) for l in lengths])
        v = fuse("u", segs, flags)
        assert (v.utterance_label == "fake") == any(s.label == "fake" for s in v.segments)


def test_fuse_malformed_partition():
    flags = np.zeros(10, dtype=np.uint8)
    with pytest.raises(DataError):
        fuse("u", [(0, 5), (6, 10)], flags)
    with pytest.raises(DataError):
        fuse("u", [(1, 10)], flags)
    with pytest.raises(DataError):
        fuse("u", [(0, 5)], flags)


def test_fuse_all_confident_probs_property():
    # every 1-segment utterance genuine, every >3-segment all-genuine
    probs = np.full(200, 0.95)
    flags = classify_frames(FrameScores("u", "spoof", 320, probs))
    assert fuse("u", [(0, 200)], flags).utterance_label == "genuine"
    segs = [(0, 40), (40, 80), (80, 120), (120, 160), (160, 200)]
    assert all(s.label == "genuine" for s in fuse("u", segs, flags).segments)


# ---------------------------------------------------------- VAE override

def _verdict(uid, seg_labels, lengths=None):
    lengths = lengths or [50] * len(seg_labels)
    segs, pos = [], 0
    for lab, ln in zip(seg_labels, lengths):
        segs.append(LabeledSegment(pos, pos + ln, lab))
        pos += ln
    utt = "fake" if any(l == "fake" for l in seg_labels) else "genuine"
    return UtteranceVerdict(uid, tuple(segs), utt)


def test_override_pool_rule():
    verdicts = {
        "a": _verdict("a", ["genuine"]),          # 0 boundaries -> pooled
        "b": _verdict("b", ["genuine", "fake"]),  # 1 boundary -> not pooled
        "c": _verdict("c", ["genuine"] * 12),     # 11 boundaries -> pooled
    }
    counts = {"a": 0, "b": 1, "c": 11}
    scores = {"a": 5.0, "c": 1.0}
    out = apply_vae_override(verdicts, counts, scores)
    assert out["b"] == verdicts["b"]
    # round(0.45 * 2) = 1 fake: "a" has the larger deviation
    assert out["a"].utterance_label == "fake"
    assert out["a"].segments[0].label == "fake"
    assert out["c"].utterance_label == "genuine"
    # multi-segment pooled: segment labels unchanged
    assert [s.label for s in out["c"].segments] == ["genuine"] * 12


def test_override_single_segment_rescored_genuine():
    verdicts = {"a": _verdict("a", ["fake"]), "b": _verdict("b", ["fake"])}
    counts = {"a": 0, "b": 0}
    out = apply_vae_override(verdicts, counts, {"a": 9.0, "b": 1.0})
    assert out["a"].utterance_label == "fake"
    assert out["b"].utterance_label == "genuine"
    assert out["b"].segments[0].label == "genuine"


def test_override_exact_fake_count():
    verdicts = {f"u{i:02d}": _verdict(f"u{i:02d}", ["genuine"]) for i in range(20)}
    counts = {u: 0 for u in verdicts}
    scores = {u: float(i) for i, u in enumerate(sorted(verdicts))}
    out = apply_vae_override(verdicts, counts, scores)
    assert sum(v.utterance_label == "fake" for v in out.values()) == 9


def test_override_missing_score():
    verdicts = {"a": _verdict("a", ["genuine"])}
    with pytest.raises(DataError):
        apply_vae_override(verdicts, {"a": 0}, {})


# ------------------------------------------------------- submission file

def test_submission_roundtrip(tmp_path):
    verdicts = [
        _verdict("u2", ["genuine", "fake", "genuine"], [25, 40, 35]),
        _verdict("u1", ["genuine"], [64]),
    ]
    p = tmp_path / "sub.tsv"
    write_submission(verdicts, p)
    text = p.read_text()
    assert text.splitlines()[0].startswith("u1\t")  # sorted output
    assert "0.50-1.30-fake" in text
    back = read_submission(p)
    assert back["u2"].segments == verdicts[0].segments
    assert back["u1"].utterance_label == "genuine"


def test_submission_rejects_malformed(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("u1\tgenuine\n")
    with pytest.raises(DataError):
        read_submission(p)
    p.write_text("u1\tgenuine\t0.00-1.00-genuine;1.50-2.00-fake\n")
    with pytest.raises(DataError):
        read_submission(p)
    p.write_text("u1\tweird\t0.00-1.00-genuine\n")
    with pytest.raises(DataError):
        read_submission(p)
