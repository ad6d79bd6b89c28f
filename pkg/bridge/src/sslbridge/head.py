"""Frame classification head on top of the frozen backbone features:
1D-CNN, a short residual stack, a small transformer encoder, a BiLSTM, and
a per-frame linear output (1 logit for boundary, 2 for spoof)."""

from __future__ import annotations

import torch
from torch import nn

RES_BLOCKS = 4


class ResBlock1d(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.a = nn.Conv1d(channels, channels, 1, bias=False)
        self.b = nn.Conv1d(channels, channels, 1, bias=False)
        self.act = nn.ReLU()

    def forward(self, x):
        return self.act(x + self.b(self.act(self.a(x))))


class FrameHead(nn.Module):
    def __init__(self, feat_dim: int, n_out: int, width: int = 512, model_dim: int = 128):
        super().__init__()
        self.conv_in = nn.Conv1d(feat_dim, width, kernel_size=5, padding=2, bias=False)
        self.res = nn.Sequential(*[ResBlock1d(width) for _ in range(RES_BLOCKS)])
        self.conv_out = nn.Conv1d(width, model_dim, kernel_size=1)
        self.proj = nn.Linear(model_dim, model_dim)
        self.norm = nn.LayerNorm(model_dim)
        layer = nn.TransformerEncoderLayer(
            d_model=model_dim, nhead=4, dim_feedforward=1024, dropout=0.2,
            batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=2)
        self.lstm = nn.LSTM(model_dim, model_dim, num_layers=1,
                            batch_first=True, bidirectional=True)
        self.out = nn.Linear(2 * model_dim, n_out)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        """feats: (batch, frames, feat_dim) -> logits (batch, frames, n_out)."""
        h = self.conv_in(feats.transpose(1, 2))
        h = self.res(h)
        h = self.conv_out(h).transpose(1, 2)
        h = self.norm(self.proj(h))
        h = self.encoder(h)
        h, _ = self.lstm(h)
        return self.out(h)


def frame_probs(head: FrameHead, feats: torch.Tensor, task: str) -> torch.Tensor:
    """Per-frame probability of the positive class (boundary present /
    genuine content), in (0, 1)."""
    with torch.no_grad():
        logits = head(feats)
        if task == "boundary":
            p = torch.sigmoid(logits[..., 0])
        else:
            p = torch.softmax(logits, dim=-1)[..., 1]  # class 1 = genuine
    return p.clamp(1e-6, 1.0 - 1e-6)
