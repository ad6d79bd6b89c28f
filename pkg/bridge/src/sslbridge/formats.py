"""File interfaces shared with the localization pipeline.

These are re-implementations of the documented text formats (the bridge
talks to the pipeline only through files):

manifest:   utterance_id<TAB>relative_path<TAB>class<TAB>region,region,...
            region = start_sample:end_sample:label
score file: #id=<id> task=<boundary|spoof> hop=<int> n=<int>
            then n lines of frame_index<TAB>prob (6 decimals)
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

CLASSES = ("genuine", "fake", "partial_fake")


@dataclass(frozen=True)
class Entry:
    utterance_id: str
    path: str
    klass: str
    regions: list  # (start, end, label)

    @property
    def n_samples(self) -> int:
        return self.regions[-1][1]

    @property
    def boundaries(self) -> list[int]:
        return [r[1] for r in self.regions[:-1]]


def read_manifest(path) -> list[Entry]:
    path = Path(path)
    entries = []
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        uid, rel, klass, region_str = line.split("\t")
        if klass not in CLASSES:
            raise ValueError(f"{path}:{ln}: unknown class {klass!r}")
        regions = []
        pos = 0
        for tok in region_str.split(","):
            s, e, label = tok.split(":")
            s, e = int(s), int(e)
            if s != pos or e <= s:
                raise ValueError(f"{path}:{ln}: regions must tile the utterance")
            regions.append((s, e, label))
            pos = e
        entries.append(Entry(uid, rel, klass, regions))
    return entries


def write_score_file(path, utterance_id: str, task: str, hop: int, probs) -> None:
    """Atomic write: the pipeline must never see a half-written file."""
    path = Path(path)
    lines = [f"#id={utterance_id} task={task} hop={hop} n={len(probs)}"]
    for i, p in enumerate(probs):
        lines.append(f"{i}\t{p:.6f}")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)
