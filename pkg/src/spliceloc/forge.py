"""Spliced-corpus construction with exact frame-level ground truth.

Provides waveform splicing with provenance recipes, the boundary / spoof
frame-labeling rules, the three training-clip sampling strategies, online
noise/reverb augmentation, and the corpus forger plus its manifest format.

Manifest format (UTF-8, one record per line):
    utterance_id<TAB>relative_path<TAB>class<TAB>region,region,...
with region = start_sample:end_sample:label. Regions must tile
[0, n_samples) without gaps or overlaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .audio import FrameGridSpec, Waveform, extract_clip, n_frames, read_wav, write_wav
from .errors import DataError

GENUINE = "genuine"
FAKE = "fake"
CLASSES = (GENUINE, FAKE, "partial_fake")
TASKS = ("boundary", "spoof")

BOUNDARY_SPREAD = (-1, 3)  # label frames floor(b/hop)-1 .. floor(b/hop)+2


class Region(NamedTuple):
    start: int
    end: int
    label: str


class SpliceSource(NamedTuple):
    source_id: str
    start: int
    end: int
    label: str


@dataclass(frozen=True)
class SpliceRecipe:
    """Provenance of a concatenated utterance: output spans and cut points."""

    sources: list[SpliceSource]
    boundaries: list[int]

    def __post_init__(self):
        if list(self.boundaries) != sorted(set(self.boundaries)):
            raise ValueError("boundaries must be strictly increasing")
        if len(self.boundaries) != len(self.sources) - 1:
            raise ValueError("need exactly one boundary per junction")

    @property
    def regions(self) -> list[Region]:
        return [Region(s.start, s.end, s.label) for s in self.sources]


@dataclass(frozen=True, eq=False)
class FrameLabels:
    task: str
    labels: np.ndarray

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        arr = np.asarray(self.labels, dtype=np.uint8)
        if arr.ndim != 1 or not np.all((arr == 0) | (arr == 1)):
            raise ValueError("labels must be a binary vector")
        object.__setattr__(self, "labels", arr)

    def __len__(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class StrategyMix:
    """Probabilities of the three clip-sampling strategies."""

    p1: float
    p2: float
    p3: float
    genuine_pick_prob: float = 0.3

    def __post_init__(self):
        ps = (self.p1, self.p2, self.p3, self.genuine_pick_prob)
        if any(p < 0 or p > 1 for p in ps):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(self.p1 + self.p2 + self.p3 - 1.0) > 1e-9:
            raise ValueError("strategy probabilities must sum to 1")


SPOOF_MIX = StrategyMix(0.35, 0.3, 0.35, genuine_pick_prob=0.3)
BOUNDARY_MIX = StrategyMix(0.2, 0.4, 0.4, genuine_pick_prob=0.3)


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    path: str
    klass: str
    regions: list[Region]

    def __post_init__(self):
        if self.klass not in CLASSES:
            raise ValueError(f"unknown class {self.klass!r}")
        validate_regions(self.regions)
        if self.klass in (GENUINE, FAKE) and len(self.regions) != 1:
            raise ValueError(f"{self.klass} entries must have exactly one region")

    @property
    def n_samples(self) -> int:
        return self.regions[-1].end

    @property
    def boundaries(self) -> list[int]:
        return [r.end for r in self.regions[:-1]]

    @property
    def is_fake_sentence(self) -> bool:
        return any(r.label == FAKE for r in self.regions)


def validate_regions(regions) -> None:
    if not regions:
        raise ValueError("empty region list")
    pos = 0
    for r in regions:
        if r.label not in (GENUINE, FAKE):
            raise ValueError(f"bad region label {r.label!r}")
        if r.start != pos or r.end <= r.start:
            raise ValueError("regions must tile [0, n) contiguously")
        pos = r.end


def splice(parts, rng=None, source_ids=None):
    """Concatenate labeled waveform parts sample-exactly.

    Returns (Waveform, SpliceRecipe); recipe boundaries sit at the
    cumulative part lengths.
    """
    if len(parts) < 2:
        raise ValueError("need at least two parts to splice")
    if source_ids is None:
        source_ids = [f"part{i}" for i in range(len(parts))]
    sources, chunks, pos = [], [], 0
    for sid, (w, label) in zip(source_ids, parts):
        if len(w) < 1:
            raise ValueError("empty part")
        chunks.append(w.samples)
        sources.append(SpliceSource(sid, pos, pos + len(w), label))
        pos += len(w)
    out = Waveform(np.concatenate(chunks), parts[0][0].sample_rate)
    recipe = SpliceRecipe(sources=sources, boundaries=[s.end for s in sources[:-1]])
    return out, recipe


def boundary_labels(boundaries, nf: int, grid: FrameGridSpec) -> FrameLabels:
    """1 for the four frames around each cut point, 0 elsewhere.

    A boundary at sample b marks frames floor(b/hop)-1 .. floor(b/hop)+2,
    clipped to the clip's frame range.
    """
    hop = grid.hop_samples
    labels = np.zeros(nf, dtype=np.uint8)
    for b in boundaries:
        if not 0 <= b < nf * hop:
            raise ValueError(f"boundary {b} outside [0, {nf * hop})")
        f = b // hop
        labels[max(0, f + BOUNDARY_SPREAD[0]):min(nf, f + BOUNDARY_SPREAD[1])] = 1
    return FrameLabels("boundary", labels)


def spoof_labels(regions, nf: int, grid: FrameGridSpec) -> FrameLabels:
    """1 for genuine frames, 0 for fake; a frame belongs to the region
    holding its center sample (half-open regions)."""
    hop = grid.hop_samples
    labels = np.zeros(nf, dtype=np.uint8)
    ri = 0
    for i in range(nf):
        center = i * hop + hop // 2
        while ri < len(regions) and regions[ri].end <= center:
            ri += 1
        if ri >= len(regions) or not regions[ri].start <= center < regions[ri].end:
            raise ValueError(f"frame center {center} not covered by any region")
        labels[i] = 1 if regions[ri].label == GENUINE else 0
    return FrameLabels("spoof", labels)


def window_regions(regions, start: int, end: int) -> list[Region]:
    """Regions intersected with [start, end), shifted to window coordinates."""
    out = []
    for r in regions:
        s, e = max(r.start, start), min(r.end, end)
        if s < e:
            out.append(Region(s - start, e - start, r.label))
    return out


def window_boundaries(regions, start: int, end: int) -> list[int]:
    """Cut points strictly inside [start, end), shifted to window coordinates."""
    return [r.end - start for r in regions[:-1] if start < r.end < end]


def draw_strategy(mix: StrategyMix, rng: np.random.Generator) -> int:
    r = rng.random()
    if r < mix.p1:
        return 1
    if r < mix.p1 + mix.p2:
        return 2
    return 3


class Corpus:
    """Manifest-backed corpus with cached waveform loading."""

    def __init__(self, entries, root):
        self.entries = {e.utterance_id: e for e in entries}
        self.root = Path(root)
        self.by_class = {c: [e for e in entries if e.klass == c] for c in CLASSES}
        self._cache: dict[str, Waveform] = {}

    @classmethod
    def open(cls, manifest_path) -> "Corpus":
        manifest_path = Path(manifest_path)
        return cls(read_manifest(manifest_path), manifest_path.parent)

    def ids(self):
        return sorted(self.entries)

    def entry(self, utterance_id: str) -> ManifestEntry:
        if utterance_id not in self.entries:
            raise DataError(f"unknown utterance id {utterance_id!r}")
        return self.entries[utterance_id]

    def load(self, utterance_id: str) -> Waveform:
        if utterance_id not in self._cache:
            e = self.entry(utterance_id)
            self._cache[utterance_id] = read_wav(self.root / e.path)
        return self._cache[utterance_id]


def _random_window(entry: ManifestEntry, w: Waveform, length: int, rng) -> tuple[int, Waveform]:
    if len(w) <= length:
        return 0, extract_clip(w, 0, length)
    start = int(rng.integers(0, len(w) - length + 1))
    return start, extract_clip(w, start, length)


def sample_training_clip(task, corpus: Corpus, mix: StrategyMix, grid: FrameGridSpec, rng):
    """Draw one fixed-length training clip plus its frame labels.

    Strategy 1 cuts a whole genuine/fake utterance, strategy 2 splices two
    genuine segments, strategy 3 cuts from a partially fake utterance.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    length = grid.window_samples
    nf = grid.frames_per_window
    strategy = draw_strategy(mix, rng)

    if strategy == 1:
        if task == "spoof":
            klass = GENUINE if rng.random() < mix.genuine_pick_prob else FAKE
            pool = corpus.by_class[klass]
        else:
            pool = corpus.by_class[GENUINE] + corpus.by_class[FAKE]
        if not pool:
            raise DataError("strategy 1 needs genuine/fake utterances")
        entry = pool[int(rng.integers(len(pool)))]
        start, clip = _random_window(entry, corpus.load(entry.utterance_id), length, rng)
        regions = window_regions(entry.regions, start, start + length)
        if len(clip) > entry.n_samples - start:  # cyclic pad: content is one class anyway
            regions = [Region(0, length, entry.regions[0].label)]
        if task == "spoof":
            return clip, spoof_labels(regions, nf, grid)
        return clip, boundary_labels([], nf, grid)

    if strategy == 2:
        pool = corpus.by_class[GENUINE]
        if len(pool) < 2:
            raise DataError("strategy 2 needs at least two genuine utterances")
        i, j = rng.choice(len(pool), size=2, replace=False)
        cut = int(rng.integers(int(0.2 * 16000), int(1.08 * 16000) + 1))
        parts = []
        for entry, part_len in ((pool[int(i)], cut), (pool[int(j)], length - cut)):
            w = corpus.load(entry.utterance_id)
            _, seg = _random_window(entry, w, part_len, rng)
            parts.append((seg, GENUINE))
        clip, recipe = splice(parts)
        if task == "spoof":
            return clip, spoof_labels(recipe.regions, nf, grid)
        return clip, boundary_labels(recipe.boundaries, nf, grid)

    pool = corpus.by_class["partial_fake"]
    if not pool:
        raise DataError("strategy 3 needs partially fake utterances")
    entry = pool[int(rng.integers(len(pool)))]
    w = corpus.load(entry.utterance_id)
    if len(w) < length:
        raise DataError(f"{entry.utterance_id}: partial-fake shorter than the clip window")
    start = int(rng.integers(0, len(w) - length + 1))
    clip = extract_clip(w, start, length)
    if task == "spoof":
        return clip, spoof_labels(window_regions(entry.regions, start, start + length), nf, grid)
    return clip, boundary_labels(window_boundaries(entry.regions, start, start + length), nf, grid)


@dataclass(frozen=True)
class AugmentConfig:
    noise_prob: float = 0.3
    reverb_prob: float = 0.2
    snr_db_min: float = 5.0
    snr_db_max: float = 20.0
    reverb_len_s: float = 0.2


def augment(w: Waveform, rng: np.random.Generator, cfg: AugmentConfig = AugmentConfig()) -> Waveform:
    """Additive noise at a random SNR and/or synthetic exponential reverb.

    Length is preserved so frame labels stay valid.
    """
    x = w.samples
    if rng.random() < cfg.noise_prob:
        noise = rng.standard_normal(len(x))
        if rng.random() < 0.5:  # babble-ish: low-passed via 8-sample smoothing
            noise = np.convolve(noise, np.ones(8) / 8.0, mode="same")
        noise /= np.std(noise) + 1e-12
        snr = rng.uniform(cfg.snr_db_min, cfg.snr_db_max)
        sig_rms = np.sqrt(np.mean(x ** 2)) + 1e-12
        x = x + noise * sig_rms * 10 ** (-snr / 20.0)
    if rng.random() < cfg.reverb_prob:
        n_ir = max(1, int(cfg.reverb_len_s * w.sample_rate))
        tau = rng.uniform(0.03, 0.1) * w.sample_rate
        ir = rng.standard_normal(n_ir) * np.exp(-np.arange(n_ir) / tau)
        ir[0] = 1.0
        ir /= np.sqrt(np.sum(ir ** 2))
        x = np.convolve(x, ir)[:len(x)]
    if x is w.samples:
        return w
    return Waveform(x, w.sample_rate)


def write_manifest(entries, path) -> None:
    lines = []
    for e in entries:
        regions = ",".join(f"{r.start}:{r.end}:{r.label}" for r in e.regions)
        lines.append(f"{e.utterance_id}\t{e.path}\t{e.klass}\t{regions}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: manifest not found")
    entries = []
    seen = set()
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise DataError(f"{path}:{ln}: expected 4 tab-separated fields")
        uid, rel, klass, region_str = fields
        if uid in seen:
            raise DataError(f"{path}:{ln}: duplicate utterance id {uid!r}")
        seen.add(uid)
        regions = []
        for tok in region_str.split(","):
            bits = tok.split(":")
            if len(bits) != 3:
                raise DataError(f"{path}:{ln}: bad region {tok!r}")
            try:
                regions.append(Region(int(bits[0]), int(bits[1]), bits[2]))
            except ValueError:
                raise DataError(f"{path}:{ln}: bad region {tok!r}")
        try:
            entries.append(ManifestEntry(uid, rel, klass, regions))
        except ValueError as exc:
            raise DataError(f"{path}:{ln}: {exc}")
    return entries


def _forge_partial(rng, base: Waveform, fake_pool, base_id: str):
    """Insert 1-3 degraded spans into a genuine base via splicing."""
    sr = base.sample_rate
    margin, min_sep = int(0.3 * sr), int(0.35 * sr)
    k = int(rng.integers(1, 4))
    for _ in range(50):
        points = np.sort(rng.integers(margin, len(base) - margin, size=k))
        if k == 1 or np.min(np.diff(points)) >= min_sep:
            break
    else:
        k, points = 1, np.array([len(base) // 2])
    parts, ids, prev = [], [], 0
    for p in points.tolist():
        parts.append((Waveform(base.samples[prev:p], sr), GENUINE))
        ids.append(base_id)
        dur = int(rng.uniform(0.3, 1.5) * sr)
        src = fake_pool[int(rng.integers(len(fake_pool)))]
        start = int(rng.integers(0, max(1, len(src) - dur)))
        parts.append((extract_clip(src, start, dur), FAKE))
        ids.append("insert")
        prev = p
    parts.append((Waveform(base.samples[prev:], sr), GENUINE))
    ids.append(base_id)
    return splice(parts, source_ids=ids)


def forge_corpus(genuine_pool, fake_pool, counts, out_dir, seed: int) -> list[ManifestEntry]:
    """Emit a labeled corpus of genuine / fake / partially fake WAVs.

    counts = (n_genuine, n_fake, n_partial). Genuine and fake utterances
    are taken from the pools one-to-one; partially fake utterances draw a
    base and insertion material per-utterance from independent RNG streams
    so generation order cannot change the output.
    """
    n_gen, n_fake, n_partial = counts
    if len(genuine_pool) < n_gen + (1 if n_partial else 0):
        raise DataError("insufficient genuine pool material")
    if len(fake_pool) < max(n_fake, 1 if n_partial else 0):
        raise DataError("insufficient fake pool material")
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    entries = []

    def emit(uid, klass, w, regions):
        rel = f"wav/{uid}.wav"
        write_wav(out_dir / rel, w)
        entries.append(ManifestEntry(uid, rel, klass, regions))

    for i in range(n_gen):
        w = genuine_pool[i]
        emit(f"gen_{i:04d}", GENUINE, w, [Region(0, len(w), GENUINE)])
    for i in range(n_fake):
        w = fake_pool[i]
        emit(f"fake_{i:04d}", FAKE, w, [Region(0, len(w), FAKE)])
    base_pool = genuine_pool[n_gen:] or genuine_pool
    insert_pool = fake_pool[n_fake:] or fake_pool
    for i in range(n_partial):
        rng = np.random.default_rng([seed, 2, i])
        base = base_pool[int(rng.integers(len(base_pool)))]
        w, recipe = _forge_partial(rng, base, insert_pool, f"base{i}")
        emit(f"pf_{i:04d}", "partial_fake", w, recipe.regions)

    write_manifest(entries, out_dir / "manifest.txt")
    return entries
