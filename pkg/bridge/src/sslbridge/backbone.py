"""Self-supervised backbones with a fixed 20 ms frame rate.

When pretrained weights are unavailable (offline environments) the model can
be constructed from its architecture config with seeded random weights; it
is then kept frozen and acts as a fixed random feature extractor.
"""

from __future__ import annotations

import math

import numpy as np
import torch

HOP_SAMPLES = 320  # 20 ms at 16 kHz

_BACKBONES = {
    "wav2vec-base": {"hidden": 768, "conv": 512},
    "wavlm-large": {"hidden": 1024, "conv": 512},
}


class BackboneError(RuntimeError):
    pass


def available_backbones():
    return sorted(_BACKBONES)


def feature_dim(name: str, layer: str) -> int:
    return _BACKBONES[name]["conv" if layer == "conv" else "hidden"]


def load_backbone(name: str, pretrained: bool, seed: int = 0):
    """Return (model, hidden_size); raises on unknown ids, frame-rate
    mismatch, or missing pretrained weights."""
    if name not in _BACKBONES:
        raise BackboneError(f"unknown backbone {name!r}; choose from {available_backbones()}")
    if name == "wav2vec-base":
        from transformers import Wav2Vec2Config, Wav2Vec2Model
        config = Wav2Vec2Config()
        cls, hub_id = Wav2Vec2Model, "facebook/wav2vec2-base-960h"
    else:
        from transformers import WavLMConfig, WavLMModel
        config = WavLMConfig(hidden_size=1024, num_hidden_layers=24,
                             num_attention_heads=16, intermediate_size=4096)
        cls, hub_id = WavLMModel, "microsoft/wavlm-large"
    stride = math.prod(config.conv_stride)
    if stride != HOP_SAMPLES:
        raise BackboneError(f"{name}: frame stride {stride} != {HOP_SAMPLES} (20 ms)")
    if pretrained:
        try:
            model = cls.from_pretrained(hub_id)
        except Exception as exc:
            raise BackboneError(f"{name}: pretrained weights unavailable ({exc})")
    else:
        torch.manual_seed(seed)
        model = cls(config)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model, _BACKBONES[name]["hidden"]


@torch.no_grad()
def extract_frames(model, waves: np.ndarray, n_frames: int,
                   layer: str = "final") -> torch.Tensor:
    """Frame features for a batch of fixed-length windows.

    Windows are right-padded by one hop so the conv stack emits at least
    `n_frames` vectors; output is trimmed to exactly that many. `layer`
    picks the contextual encoder output ("final") or the conv feature
    extractor output ("conv"); the conv features stay frame-local, which
    matters when the encoder weights are random.
    """
    x = torch.from_numpy(np.ascontiguousarray(waves)).float()
    if x.ndim == 1:
        x = x[None, :]
    x = torch.nn.functional.pad(x, (0, HOP_SAMPLES))
    if layer == "conv":
        out = model.feature_extractor(x).transpose(1, 2)
    else:
        out = model(x).last_hidden_state
    if out.shape[1] < n_frames:
        raise BackboneError(f"backbone produced {out.shape[1]} frames, need {n_frames}")
    return out[:, :n_frames, :]
