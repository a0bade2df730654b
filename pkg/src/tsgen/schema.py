"""Feature schema: declarations, normalization statistics, and transforms.

A schema is fitted on the training split only and fully determines the
encoded representation: continuous features min-max scale to [0, 1]
(after optional clamping), categorical features one-hot against a
vocabulary frozen at fit time, timestamps rescale by the training
horizon. The fitted schema round-trips through JSON and hashes stably so
checkpoints can refuse mismatched data.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FitError, SchemaError, VocabError
from .instances import RawSeries, TimeSeriesInstance

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
DYNAMIC = "dynamic"
GLOBAL = "global"

#: vocabulary entry that absorbs categories unseen at fit time
OTHER_TOKEN = "<other>"
#: name of the synthesized sequence-length global
LENGTH_FEATURE = "__length__"


@dataclass(frozen=True)
class FeatureDef:
    """Declared properties of one feature, prior to fitting.

    clamp: optional (low, high) applied to raw continuous values before
        statistics and scaling.
    normal_value: raw fallback used by downstream consumers that need a
        fill-in for never-observed entries (e.g. binned classifiers).
    allow_other: categorical only; route unseen categories to a dedicated
        vocabulary slot instead of raising.
    """

    name: str
    kind: str
    role: str
    clamp: tuple | None = None
    normal_value: float | None = None
    allow_other: bool = False

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"unknown feature kind {self.kind!r}")
        if self.role not in (DYNAMIC, GLOBAL):
            raise SchemaError(f"unknown feature role {self.role!r}")
        if self.clamp is not None:
            lo, hi = self.clamp
            if not lo < hi:
                raise SchemaError(f"clamp bounds for {self.name!r} must satisfy lo < hi")
        if self.allow_other and self.kind != CATEGORICAL:
            raise SchemaError("allow_other only applies to categorical features")


@dataclass(frozen=True)
class GroupSlice:
    """Encoded column span of one feature group."""

    name: str
    kind: str
    start: int
    stop: int

    @property
    def width(self) -> int:
        return self.stop - self.start


class EncodingLayout:
    """Column bookkeeping for the encoded representation.

    Dynamic features occupy d_x columns in K groups; global features
    occupy d_y columns in G groups. Continuous groups have width 1,
    categorical groups the vocabulary cardinality.
    """

    def __init__(self, dynamic_groups, global_groups, length_group=None):
        self.dynamic_groups: list[GroupSlice] = list(dynamic_groups)
        self.global_groups: list[GroupSlice] = list(global_groups)
        self.length_group: int | None = length_group  # index into global_groups
        self.d_x = self.dynamic_groups[-1].stop if self.dynamic_groups else 0
        self.d_y = self.global_groups[-1].stop if self.global_groups else 0
        self.K = len(self.dynamic_groups)
        self.G = len(self.global_groups)
        cols = np.zeros(self.d_x, dtype=np.int64)
        for j, g in enumerate(self.dynamic_groups):
            cols[g.start : g.stop] = j
        self._dyn_col_group = cols

    def expand_mask(self, M):
        """Broadcast a per-group mask (l, K) onto encoded columns (l, d_x).

        Works for numpy arrays and torch tensors alike (fancy indexing
        on the last axis).
        """
        if not hasattr(M, "ndim"):
            M = np.asarray(M)
        return M[..., self._dyn_col_group]

    @property
    def length_slice(self) -> GroupSlice | None:
        if self.length_group is None:
            return None
        return self.global_groups[self.length_group]


class SchemaDescriptor:
    """A fitted schema: feature list plus everything learned from training data."""

    def __init__(
        self,
        features,
        minima,
        maxima,
        vocabularies,
        time_unit,
        max_length,
        complete=False,
        has_length_feature=False,
    ):
        self.features: list[FeatureDef] = list(features)
        self.minima: dict[str, float] = dict(minima)
        self.maxima: dict[str, float] = dict(maxima)
        self.vocabularies: dict[str, list] = {
            k: list(v) for k, v in vocabularies.items()
        }
        self.time_unit = float(time_unit)
        self.max_length = int(max_length)
        self.complete = bool(complete)
        self.has_length_feature = bool(has_length_feature)
        if self.time_unit <= 0:
            raise SchemaError("time_unit must be positive")
        if self.max_length < 1:
            raise SchemaError("max_length must be at least 1")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        self._layout = self._build_layout()

    # -- structure ---------------------------------------------------------

    @property
    def dynamic_features(self) -> list[FeatureDef]:
        return [f for f in self.features if f.role == DYNAMIC]

    @property
    def global_features(self) -> list[FeatureDef]:
        return [f for f in self.features if f.role == GLOBAL]

    def _groups(self, feats):
        groups, offset = [], 0
        for f in feats:
            width = 1 if f.kind == CONTINUOUS else len(self.vocabularies[f.name])
            groups.append(GroupSlice(f.name, f.kind, offset, offset + width))
            offset += width
        return groups

    def _build_layout(self) -> EncodingLayout:
        glob = self.global_features
        length_group = None
        if self.has_length_feature:
            length_group = next(
                i for i, f in enumerate(glob) if f.name == LENGTH_FEATURE
            )
        return EncodingLayout(
            self._groups(self.dynamic_features), self._groups(glob), length_group
        )

    @property
    def layout(self) -> EncodingLayout:
        return self._layout

    def is_constant(self, name: str) -> bool:
        return self.maxima[name] == self.minima[name]

    # -- scalar codecs -----------------------------------------------------

    def _scale(self, f: FeatureDef, v: float) -> float:
        if f.clamp is not None:
            v = min(max(v, f.clamp[0]), f.clamp[1])
        lo, hi = self.minima[f.name], self.maxima[f.name]
        if hi == lo:
            return 0.0
        return min(max((v - lo) / (hi - lo), 0.0), 1.0)

    def _unscale(self, f: FeatureDef, v: float) -> float:
        lo, hi = self.minima[f.name], self.maxima[f.name]
        if hi == lo:
            return lo
        return v * (hi - lo) + lo

    def _index_of(self, f: FeatureDef, token) -> int:
        vocab = self.vocabularies[f.name]
        try:
            return vocab.index(token)
        except ValueError:
            if f.allow_other:
                return vocab.index(OTHER_TOKEN)
            raise VocabError(
                f"category {token!r} of feature {f.name!r} not seen at fit time"
            ) from None

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "features": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    "role": f.role,
                    "clamp": list(f.clamp) if f.clamp is not None else None,
                    "normal_value": f.normal_value,
                    "allow_other": f.allow_other,
                }
                for f in self.features
            ],
            "minima": self.minima,
            "maxima": self.maxima,
            "vocabularies": self.vocabularies,
            "time_unit": self.time_unit,
            "max_length": self.max_length,
            "complete": self.complete,
            "has_length_feature": self.has_length_feature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaDescriptor":
        feats = [
            FeatureDef(
                name=f["name"],
                kind=f["kind"],
                role=f["role"],
                clamp=tuple(f["clamp"]) if f.get("clamp") else None,
                normal_value=f.get("normal_value"),
                allow_other=f.get("allow_other", False),
            )
            for f in d["features"]
        ]
        return cls(
            feats,
            d["minima"],
            d["maxima"],
            d["vocabularies"],
            d["time_unit"],
            d["max_length"],
            complete=d.get("complete", False),
            has_length_feature=d.get("has_length_feature", False),
        )

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# fitting


def _observed_floats(f: FeatureDef, raw_values) -> list[float]:
    out = []
    for v in raw_values:
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        v = float(v)
        if f.clamp is not None:
            v = min(max(v, f.clamp[0]), f.clamp[1])
        out.append(v)
    return out


def fit_schema(
    records,
    features,
    time_unit: float | None = None,
    complete: bool = False,
) -> SchemaDescriptor:
    """Fit normalization statistics and vocabularies on training records.

    Continuous features get min/max after clamping (constant features are
    remembered and encode to 0). Categorical vocabularies keep sorted
    order of the observed values. The time unit defaults to the largest
    final timestamp across records so normalized times span [0, 1].
    """
    records = list(records)
    if not records:
        raise FitError("cannot fit a schema on an empty record set")
    minima, maxima, vocabularies = {}, {}, {}
    for f in features:
        if f.role == DYNAMIC:
            raw = [v for r in records for v in r.values.get(f.name, ())]
        else:
            raw = [r.globals.get(f.name) for r in records]
        if f.kind == CONTINUOUS:
            vals = _observed_floats(f, raw)
            if vals:
                minima[f.name], maxima[f.name] = min(vals), max(vals)
            else:
                minima[f.name] = maxima[f.name] = 0.0
        else:
            seen = sorted({str(v) for v in raw if v is not None})
            if not seen:
                raise SchemaError(
                    f"categorical feature {f.name!r} has no observed categories"
                )
            if f.allow_other:
                seen.append(OTHER_TOKEN)
            vocabularies[f.name] = seen
    max_length = max(len(r) for r in records)
    if time_unit is None:
        horizon = max(float(r.times[-1]) for r in records)
        time_unit = horizon if horizon > 0 else 1.0
    return SchemaDescriptor(
        features, minima, maxima, vocabularies, time_unit, max_length, complete=complete
    )


# ---------------------------------------------------------------------------
# transforms


def _is_missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def transform(record: RawSeries, schema: SchemaDescriptor) -> TimeSeriesInstance:
    """Encode one raw record against a fitted schema.

    Complete mode regrids timestamps to i/(l-1) and rejects gaps; the
    missing-data mode zero-imputes unobserved entries and records them in
    the masks. Raises DataError for empty or non-increasing time axes and
    VocabError for unseen categories without an allow_other escape.
    """
    layout = schema.layout
    l = len(record)
    if l == 0:
        raise DataError(f"record {record.key!r} has no observations")
    t = np.asarray(record.times, dtype=np.float64)
    if l > 1 and np.any(np.diff(t) <= 0):
        raise DataError(f"record {record.key!r} has non-increasing timestamps")
    if schema.complete:
        t = np.linspace(0.0, 1.0, l) if l > 1 else np.zeros(1)
    else:
        t = t / schema.time_unit

    X = np.zeros((l, layout.d_x), dtype=np.float64)
    M = np.zeros((l, layout.K), dtype=np.uint8)
    for j, (f, g) in enumerate(zip(schema.dynamic_features, layout.dynamic_groups)):
        col = record.values.get(f.name)
        if col is None:
            col = np.full(l, None, dtype=object)
        for i, v in enumerate(col):
            if _is_missing(v):
                if schema.complete:
                    raise DataError(
                        f"complete-mode record {record.key!r} has a gap in {f.name!r}"
                    )
                continue
            M[i, j] = 1
            if f.kind == CONTINUOUS:
                X[i, g.start] = schema._scale(f, float(v))
            else:
                X[i, g.start + schema._index_of(f, str(v))] = 1.0

    y = np.zeros(layout.d_y, dtype=np.float64)
    m_y = np.zeros(layout.G, dtype=np.uint8)
    for j, (f, g) in enumerate(zip(schema.global_features, layout.global_groups)):
        if f.name == LENGTH_FEATURE:
            if l > schema.max_length:
                raise DataError(
                    f"record {record.key!r} longer than schema max_length"
                    f" ({l} > {schema.max_length})"
                )
            y[g.start] = l / schema.max_length
            m_y[j] = 1
            continue
        v = record.globals.get(f.name)
        if _is_missing(v):
            continue
        m_y[j] = 1
        if f.kind == CONTINUOUS:
            y[g.start] = schema._scale(f, float(v))
        else:
            y[g.start + schema._index_of(f, str(v))] = 1.0
    return TimeSeriesInstance(X, y, M, m_y, t)


def inverse_transform(
    instance: TimeSeriesInstance, schema: SchemaDescriptor, key: str = "0"
) -> RawSeries:
    """Decode an encoded instance back to raw units.

    Masked entries come back as None. Constant continuous features
    restore their fitted value; categorical groups decode by argmax.
    """
    layout = schema.layout
    if instance.X.shape[1] != layout.d_x or instance.y.shape[0] != layout.d_y:
        raise SchemaError(
            f"instance dims ({instance.X.shape[1]}, {instance.y.shape[0]}) do not"
            f" match schema layout ({layout.d_x}, {layout.d_y})"
        )
    l = instance.length
    if schema.complete:
        times = np.arange(l, dtype=np.float64)
    else:
        times = instance.t * schema.time_unit
    values = {}
    for j, (f, g) in enumerate(zip(schema.dynamic_features, layout.dynamic_groups)):
        col = np.full(l, None, dtype=object)
        for i in range(l):
            if instance.M_x[i, j] != 1:
                continue
            if f.kind == CONTINUOUS:
                col[i] = schema._unscale(f, float(instance.X[i, g.start]))
            else:
                idx = int(np.argmax(instance.X[i, g.start : g.stop]))
                col[i] = schema.vocabularies[f.name][idx]
        values[f.name] = col
    globals_ = {}
    for j, (f, g) in enumerate(zip(schema.global_features, layout.global_groups)):
        if f.name == LENGTH_FEATURE:
            continue
        if instance.m_y[j] != 1:
            globals_[f.name] = None
        elif f.kind == CONTINUOUS:
            globals_[f.name] = schema._unscale(f, float(instance.y[g.start]))
        else:
            idx = int(np.argmax(instance.y[g.start : g.stop]))
            globals_[f.name] = schema.vocabularies[f.name][idx]
    return RawSeries(key, times, values, globals_)


def decode_length(value: float, schema: SchemaDescriptor) -> int:
    """Round a decoded length ratio back to steps (half-up, clamped to [1, L])."""
    L = schema.max_length
    return int(min(max(math.floor(value * L + 0.5), 1), L))


# ---------------------------------------------------------------------------
# dataset


class Dataset:
    """An encoded split: fitted schema plus a list of instances."""

    def __init__(self, schema: SchemaDescriptor, instances, split: str = "train"):
        self.schema = schema
        self.instances: list[TimeSeriesInstance] = list(instances)
        self.split = str(split)
        layout = schema.layout
        for inst in self.instances:
            if inst.X.shape[1] != layout.d_x or inst.y.shape[0] != layout.d_y:
                raise SchemaError("instance dims do not match dataset schema")

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def dynamic_missing_rates(self) -> np.ndarray:
        """Fraction of missing entries per dynamic feature, pooled over steps."""
        counts = np.zeros(self.schema.layout.K, dtype=np.float64)
        steps = 0
        for inst in self.instances:
            counts += inst.M_x.sum(axis=0)
            steps += inst.length
        if steps == 0:
            raise DataError("dataset has no observations")
        return 1.0 - counts / steps

    def global_missing_rates(self) -> np.ndarray:
        rates = np.stack([inst.m_y for inst in self.instances]).mean(axis=0)
        return 1.0 - rates


def append_length_feature(dataset: Dataset) -> Dataset:
    """Expose sequence length as one extra global feature in [0, 1].

    Returns a new dataset whose schema appends a continuous global named
    by LENGTH_FEATURE; each instance's y grows by one always-observed
    slot carrying length / max_length.
    """
    schema = dataset.schema
    if schema.has_length_feature:
        raise SchemaError("dataset already carries a length feature")
    features = list(schema.features) + [
        FeatureDef(LENGTH_FEATURE, CONTINUOUS, GLOBAL)
    ]
    minima = dict(schema.minima)
    maxima = dict(schema.maxima)
    minima[LENGTH_FEATURE], maxima[LENGTH_FEATURE] = 0.0, 1.0
    new_schema = SchemaDescriptor(
        features,
        minima,
        maxima,
        schema.vocabularies,
        schema.time_unit,
        schema.max_length,
        complete=schema.complete,
        has_length_feature=True,
    )
    out = []
    for inst in dataset.instances:
        y = np.concatenate([inst.y, [inst.length / schema.max_length]])
        m_y = np.concatenate([inst.m_y, [1]])
        out.append(TimeSeriesInstance(inst.X, y, inst.M_x, m_y, inst.t))
    return Dataset(new_schema, out, split=dataset.split)
