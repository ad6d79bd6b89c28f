"""Frame labeling rules for head training, on the 20 ms grid.

Boundary: the four frames around each cut point (floor(b/hop)-1 ..
floor(b/hop)+2) are positive. Spoof: a frame takes the label of the region
holding its center sample; genuine -> 1, fake -> 0.
"""

from __future__ import annotations

import numpy as np


def boundary_targets(boundaries, n_frames: int, hop: int) -> np.ndarray:
    out = np.zeros(n_frames, dtype=np.float32)
    for b in boundaries:
        f = b // hop
        out[max(0, f - 1):min(n_frames, f + 3)] = 1.0
    return out


def spoof_targets(regions, n_frames: int, hop: int) -> np.ndarray:
    """1 = genuine, 0 = fake (class index for the 2-logit softmax head)."""
    out = np.zeros(n_frames, dtype=np.int64)
    for i in range(n_frames):
        center = i * hop + hop // 2
        label = next(r[2] for r in regions if r[0] <= center < r[1])
        out[i] = 1 if label == "genuine" else 0
    return out


def window_view(regions, start: int, end: int):
    """Regions intersected with [start, end) in window coordinates, plus the
    cut points strictly inside the window."""
    sub = []
    for s, e, label in regions:
        a, b = max(s, start), min(e, end)
        if a < b:
            sub.append((a - start, b - start, label))
    bounds = [e - start for s, e, _ in regions[:-1] if start < e < end]
    return sub, bounds
