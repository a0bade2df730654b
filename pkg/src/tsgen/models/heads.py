"""Grouped output heads: sigmoid for continuous, softmax per categorical group."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class FeatureHead(nn.Module):
    """Affine map to a grouped feature block with per-group activations.

    Continuous groups (width 1) squash through a sigmoid; categorical
    groups normalize with a softmax over their one-hot columns.
    """

    def __init__(self, d_in: int, groups):
        super().__init__()
        self.groups = list(groups)
        self.width = self.groups[-1].stop if self.groups else 0
        self.linear = nn.Linear(d_in, self.width)

    def activate(self, logits: torch.Tensor) -> torch.Tensor:
        parts = []
        for g in self.groups:
            block = logits[..., g.start : g.stop]
            if g.kind == "continuous":
                parts.append(torch.sigmoid(block))
            else:
                parts.append(torch.softmax(block, dim=-1))
        return torch.cat(parts, dim=-1)

    def forward(self, h):
        logits = self.linear(h)
        return self.activate(logits), logits


def group_loss(logits: torch.Tensor, target: torch.Tensor, groups) -> torch.Tensor:
    """Per-group loss terms, stacked on a trailing axis of len(groups).

    Continuous groups contribute squared error between the sigmoid output
    and the target; categorical groups contribute cross-entropy of the
    softmax against the one-hot target. An all-zero target row (padding
    or a masked-out observation) contributes exactly 0 for categorical
    groups and target-0 squared error for continuous ones, so callers
    must mask before reducing.
    """
    terms = []
    for g in groups:
        block = logits[..., g.start : g.stop]
        tgt = target[..., g.start : g.stop]
        if g.kind == "continuous":
            terms.append((torch.sigmoid(block[..., 0]) - tgt[..., 0]) ** 2)
        else:
            terms.append(-(tgt * F.log_softmax(block, dim=-1)).sum(dim=-1))
    return torch.stack(terms, dim=-1)
