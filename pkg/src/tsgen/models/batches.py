"""Padded tensor batches assembled from encoded datasets."""

from __future__ import annotations

import numpy as np
import torch

from ..instances import carry_forward, lag_matrix


class PaddedBatch:
    """Right-padded tensors for a set of instances.

    X: (B, L, d_x), y: (B, d_y), M: (B, L, K), m_y: (B, G), t: (B, L),
    lengths: (B,), step_mask: (B, L) bool. `pre` (last valid observations,
    column-expanded) and `delta` (time lags) are filled only when
    `with_history` is requested; the decoders for incomplete data need
    them, the complete-data path does not.
    """

    FIELDS = ("X", "y", "M", "m_y", "t", "lengths", "step_mask", "pre", "delta")

    def __init__(self, X, y, M, m_y, t, lengths, step_mask, pre=None, delta=None):
        self.X = X
        self.y = y
        self.M = M
        self.m_y = m_y
        self.t = t
        self.lengths = lengths
        self.step_mask = step_mask
        self.pre = pre
        self.delta = delta

    @classmethod
    def from_instances(cls, instances, layout, with_history=False, dtype=torch.float32):
        n = len(instances)
        L = max(inst.length for inst in instances)
        d_x, K = layout.d_x, layout.K
        X = np.zeros((n, L, d_x), dtype=np.float64)
        M = np.zeros((n, L, K), dtype=np.float64)
        t = np.zeros((n, L), dtype=np.float64)
        y = np.stack([inst.y for inst in instances])
        m_y = np.stack([inst.m_y for inst in instances]).astype(np.float64)
        lengths = np.array([inst.length for inst in instances], dtype=np.int64)
        pre = np.zeros((n, L, d_x), dtype=np.float64) if with_history else None
        delta = np.zeros((n, L, K), dtype=np.float64) if with_history else None
        for i, inst in enumerate(instances):
            l = inst.length
            X[i, :l] = inst.X
            M[i, :l] = inst.M_x
            t[i, :l] = inst.t
            if with_history:
                observed = layout.expand_mask(inst.M_x)
                pre[i, :l] = carry_forward(inst.X, observed)
                delta[i, :l] = lag_matrix(inst.M_x, inst.t)
        step_mask = torch.arange(L)[None, :] < torch.as_tensor(lengths)[:, None]
        return cls(
            X=torch.as_tensor(X, dtype=dtype),
            y=torch.as_tensor(y, dtype=dtype),
            M=torch.as_tensor(M, dtype=dtype),
            m_y=torch.as_tensor(m_y, dtype=dtype),
            t=torch.as_tensor(t, dtype=dtype),
            lengths=torch.as_tensor(lengths),
            step_mask=step_mask,
            pre=torch.as_tensor(pre, dtype=dtype) if with_history else None,
            delta=torch.as_tensor(delta, dtype=dtype) if with_history else None,
        )

    _TIME_AXIS = frozenset({"X", "M", "t", "step_mask", "pre", "delta"})

    def index(self, idx) -> "PaddedBatch":
        """Row subset; trims padding to the subset's longest sequence."""
        fields = {}
        lengths = self.lengths[idx]
        L = int(lengths.max())
        for name in self.FIELDS:
            v = getattr(self, name)
            if v is None:
                fields[name] = None
            elif name in self._TIME_AXIS:
                fields[name] = v[idx, :L]
            else:
                fields[name] = v[idx]
        return PaddedBatch(**fields)

    def __len__(self):
        return self.X.shape[0]

    @property
    def max_len(self) -> int:
        return self.X.shape[1]
