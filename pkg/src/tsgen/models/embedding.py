"""Per-step observation embeddings for sequences with missing entries."""

from __future__ import annotations

import torch
from torch import nn

from ..errors import SchemaError


class TimeEmbedding(nn.Module):
    """Learnable time representation: slot 0 is linear, the rest sinusoidal.

    phi(t)[0] = w_0 t + b_0 and phi(t)[j] = sin(w_j t + b_j) for j >= 1,
    so the embedding carries both absolute progression and periodic
    structure of the (normalized) timestamp.
    """

    def __init__(self, width: int):
        super().__init__()
        if width < 2:
            raise SchemaError("time embedding needs width >= 2")
        self.lin = nn.Linear(1, width)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        z = self.lin(t.unsqueeze(-1))
        return torch.cat([z[..., :1], torch.sin(z[..., 1:])], dim=-1)


class ObservationEmbedding(nn.Module):
    """e = W [x, pre, mask, y, m_y] + phi(t), shared by encoder and decoder.

    The projection carries no bias so phi(t) is the only additive term;
    identical inputs always produce identical embeddings because both
    sides hold the same module instance.
    """

    def __init__(self, layout, width: int):
        super().__init__()
        self.d_in = 2 * layout.d_x + layout.K + layout.d_y + layout.G
        self.width = width
        self.project = nn.Linear(self.d_in, width, bias=False)
        self.time = TimeEmbedding(width)

    def forward(self, x, pre, mask, y, m_y, t) -> torch.Tensor:
        feats = torch.cat([x, pre, mask, y, m_y], dim=-1)
        if feats.shape[-1] != self.d_in:
            raise SchemaError(
                f"observation has width {feats.shape[-1]}, embedding expects {self.d_in}"
            )
        return self.project(feats) + self.time(t)


class ConcatObservation(nn.Module):
    """Ablation stand-in: raw concatenation [x, pre, mask, y, m_y, t].

    No learned projection and no time representation; the recurrent
    stacks see the plain feature vector instead.
    """

    def __init__(self, layout):
        super().__init__()
        self.d_in = 2 * layout.d_x + layout.K + layout.d_y + layout.G
        self.width = self.d_in + 1

    def forward(self, x, pre, mask, y, m_y, t) -> torch.Tensor:
        feats = torch.cat([x, pre, mask, y, m_y], dim=-1)
        if feats.shape[-1] != self.d_in:
            raise SchemaError(
                f"observation has width {feats.shape[-1]}, expected {self.d_in}"
            )
        return torch.cat([feats, t.unsqueeze(-1)], dim=-1)
