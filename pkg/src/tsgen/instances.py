"""Sequence containers and the mask/time-lag machinery shared by all models.

All encoded values live in [0, 1]; missing entries are zero-imputed and
tracked through binary masks. Timestamps are normalized to the dataset's
maximum horizon. Containers are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, WindowError


class RawSeries:
    """One instance in raw units: timestamps, per-feature value arrays, globals.

    `values` maps each dynamic feature name to an object array of length l
    where None marks a missing observation. `globals` maps each global
    feature name to a scalar (None = missing).
    """

    __slots__ = ("key", "times", "values", "globals")

    def __init__(self, key, times, values, globals=None):
        self.key = str(key)
        self.times = np.asarray(times, dtype=np.float64)
        self.values = {
            name: np.asarray(col, dtype=object) for name, col in values.items()
        }
        self.globals = dict(globals) if globals else {}
        for name, col in self.values.items():
            if len(col) != len(self.times):
                raise DataError(
                    f"feature {name!r} has {len(col)} rows, expected {len(self.times)}"
                )

    def __len__(self):
        return len(self.times)


class TimeSeriesInstance:
    """One encoded sequence: X (l, d_x), y (d_y,), masks, normalized timestamps.

    Invariants enforced here: consistent row counts, strictly increasing
    timestamps, binary masks, masked dynamic entries exactly zero. Group
    structure (one-hot sums) is checked against a schema layout, not here.
    """

    __slots__ = ("X", "y", "M_x", "m_y", "t")

    def __init__(self, X, y, M_x, m_y, t):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.M_x = np.ascontiguousarray(M_x, dtype=np.uint8)
        self.m_y = np.ascontiguousarray(m_y, dtype=np.uint8)
        self.t = np.ascontiguousarray(t, dtype=np.float64)
        self._validate()
        for arr in (self.X, self.y, self.M_x, self.m_y, self.t):
            arr.setflags(write=False)

    def _validate(self):
        l = len(self.t)
        if l == 0:
            raise DataError("instance must contain at least one observation")
        if self.X.ndim != 2 or self.X.shape[0] != l:
            raise DataError(f"X has shape {self.X.shape}, expected ({l}, d_x)")
        if self.M_x.ndim != 2 or self.M_x.shape[0] != l:
            raise DataError(f"M_x has shape {self.M_x.shape}, expected ({l}, K)")
        if self.y.ndim != 1 or self.m_y.ndim != 1:
            raise DataError("y and m_y must be vectors")
        if l > 1 and np.any(np.diff(self.t) <= 0):
            raise DataError("timestamps must be strictly increasing")
        if self.t[0] < 0:
            raise DataError("timestamps must be non-negative")
        for mask in (self.M_x, self.m_y):
            if mask.size and not np.isin(mask, (0, 1)).all():
                raise DataError("masks must be binary")

    @property
    def length(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class LagMatrix:
    """Per-feature elapsed time since the last valid observation."""

    delta: np.ndarray  # (l, K), normalized time units


def lag_matrix(mask: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Time-lag recurrence over a (l, K) mask and (l,) timestamp vector.

    Row 0 is zero. For i >= 1, a feature observed at the previous step
    restarts its lag at the step interval; otherwise the interval
    accumulates onto the previous lag.
    """
    mask = np.asarray(mask)
    t = np.asarray(t, dtype=np.float64)
    l, k = mask.shape
    delta = np.zeros((l, k), dtype=np.float64)
    for i in range(1, l):
        dt = t[i] - t[i - 1]
        delta[i] = np.where(mask[i - 1] == 1, dt, delta[i - 1] + dt)
    return delta


def compute_time_lags(instance: TimeSeriesInstance) -> LagMatrix:
    return LagMatrix(lag_matrix(instance.M_x, instance.t))


def carry_forward(values: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Most recent observed value strictly before each step, zero if none.

    `observed` must already be expanded to the encoded column layout
    (same shape as `values`).
    """
    pre = np.zeros_like(values)
    last = np.zeros(values.shape[1], dtype=values.dtype)
    for i in range(values.shape[0]):
        pre[i] = last
        last = np.where(observed[i] == 1, values[i], last)
    return pre


def carry_last_observations(instance: TimeSeriesInstance, layout) -> np.ndarray:
    """Column-expanded last-observation matrix for one instance."""
    observed = layout.expand_mask(instance.M_x)
    return carry_forward(instance.X, observed)


def extract_windows(series: RawSeries, window_len: int) -> list[RawSeries]:
    """All overlapping windows of `window_len` steps, stride 1.

    Requires complete data; windows keep a 0..window_len-1 step index as
    their timestamps (complete-mode transforms regrid them anyway).
    """
    n = len(series)
    if window_len < 1:
        raise WindowError("window length must be positive")
    if n < window_len:
        raise WindowError(f"series of length {n} shorter than window {window_len}")
    for name, col in series.values.items():
        if any(v is None for v in col):
            raise DataError(f"windowing requires complete data; {name!r} has gaps")
    windows = []
    steps = np.arange(window_len, dtype=np.float64)
    for k in range(n - window_len + 1):
        values = {name: col[k : k + window_len] for name, col in series.values.items()}
        windows.append(
            RawSeries(f"{series.key}#{k}", steps, values, dict(series.globals))
        )
    return windows
