"""Downstream label classifiers for train-on-synthetic, test-on-real scoring.

Four recipes are supported, each a (kind, scaling) pair:

- zeroRNN: GRU over [statics, dynamics, masks], missing entries zero after
  scaling.
- lastRNN: GRU over [statics, dynamics, time lags], missing entries filled
  with the last valid observation (zero if none), after scaling.
- LR: logistic regression on hand-engineered statistics per feature and
  time window.
- discreteLSTM: LSTM over a regular-interval resampling of the series,
  standardization only.

All of them train on one dataset and report ROC AUC on another, so utility
is measured by swapping synthetic data into the training side.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import torch
from scipy import stats as scipy_stats
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score
from sklearn.preprocessing import MinMaxScaler, StandardScaler

from ..errors import ConfigError, EvalError
from ..instances import carry_forward, lag_matrix
from ..schema import CATEGORICAL, CONTINUOUS
from .nets import SequenceClassifier, classifier_logits, train_classifier

KINDS = ("zeroRNN", "lastRNN", "LR", "discreteLSTM")
SCALINGS = ("min-max", "standardization")

# (hidden, epochs) used when the spec leaves them unset
_KIND_DEFAULTS = {
    "zeroRNN": (32, 40),
    "lastRNN": (32, 40),
    "discreteLSTM": (16, 30),
    "LR": (0, 0),
}

STAT_NAMES = ("min", "max", "mean", "std", "skew", "count")
WINDOWS = (
    ("full", 1.0),
    ("first", 0.10),
    ("first", 0.25),
    ("first", 0.50),
    ("last", 0.50),
    ("last", 0.25),
    ("last", 0.10),
)


@dataclass(frozen=True)
class DownstreamSpec:
    """One classifier recipe: kind, scaling choice, and training constants."""

    kind: str
    scaling: str
    hidden: int | None = None
    epochs: int | None = None
    lr: float = 1e-3
    batch_size: int = 128
    bin_width: float = 1.0  # discreteLSTM resampling interval, raw time units

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown classifier kind {self.kind!r}")
        if self.scaling not in SCALINGS:
            raise ConfigError(f"unknown scaling {self.scaling!r}")
        if self.kind == "discreteLSTM" and self.scaling != "standardization":
            raise ConfigError("discreteLSTM is only defined with standardization")
        if self.bin_width <= 0:
            raise ConfigError("bin_width must be positive")

    @property
    def name(self) -> str:
        return f"{self.kind}/{self.scaling}"

    def resolved(self):
        hidden, epochs = _KIND_DEFAULTS[self.kind]
        return (
            self.hidden if self.hidden is not None else hidden,
            self.epochs if self.epochs is not None else epochs,
        )


def default_grid(**kwargs) -> list[DownstreamSpec]:
    """The full classifier-by-scaling grid (discreteLSTM only under standardization)."""
    grid = [
        DownstreamSpec(kind, scaling, **kwargs)
        for scaling in SCALINGS
        for kind in ("LR", "zeroRNN", "lastRNN")
    ]
    grid.append(DownstreamSpec("discreteLSTM", "standardization", **kwargs))
    return grid


def rnn_grid(**kwargs) -> list[DownstreamSpec]:
    """The recurrent-classifier subgrid: zeroRNN/lastRNN under both scalings."""
    return [
        DownstreamSpec(kind, scaling, **kwargs)
        for scaling in SCALINGS
        for kind in ("zeroRNN", "lastRNN")
    ]


# ---------------------------------------------------------------------------
# labels and scaling helpers


def class_labels(dataset, label: str) -> np.ndarray:
    """Binary class index per instance, read from a categorical global feature."""
    layout = dataset.schema.layout
    for g in layout.global_groups:
        if g.name != label:
            continue
        if g.kind != CATEGORICAL:
            raise EvalError(f"label feature {label!r} must be categorical")
        if g.width != 2:
            raise EvalError(
                f"label feature {label!r} must be binary, has {g.width} classes"
            )
        block = np.stack([inst.y[g.start : g.stop] for inst in dataset.instances])
        return block.argmax(axis=1).astype(np.int64)
    raise EvalError(f"no global feature named {label!r}")


def _label_group(layout, label):
    for g in layout.global_groups:
        if g.name == label:
            return g
    raise EvalError(f"no global feature named {label!r}")


def _make_scaler(scaling):
    return MinMaxScaler() if scaling == "min-max" else StandardScaler()


def _fit_scaler(rows, scaling):
    """Fit a feature scaler on observed entries; NaN marks missing ones."""
    rows = np.asarray(rows, dtype=np.float64)
    unseen = np.isnan(rows).all(axis=0)
    if unseen.any():
        rows = rows.copy()
        rows[:, unseen] = 0.0
    scaler = _make_scaler(scaling)
    scaler.fit(rows)
    return scaler


def _dynamics_scaler(train, layout, scaling):
    rows = np.concatenate(
        [
            np.where(layout.expand_mask(inst.M_x) == 1, inst.X, np.nan)
            for inst in train.instances
        ]
    )
    return _fit_scaler(rows, scaling)


def _global_column_groups(layout):
    cols = np.zeros(layout.d_y, dtype=np.int64)
    for i, g in enumerate(layout.global_groups):
        cols[g.start : g.stop] = i
    return cols


def _static_matrix(dataset, layout, label):
    """Per-instance static columns (label excluded), NaN where unobserved."""
    grp = _label_group(layout, label)
    keep = np.ones(layout.d_y, dtype=bool)
    keep[grp.start : grp.stop] = False
    col_groups = _global_column_groups(layout)
    y = np.stack([inst.y for inst in dataset.instances])
    m = np.stack([inst.m_y for inst in dataset.instances])[:, col_groups]
    return np.where(m == 1, y, np.nan)[:, keep]


def _check_schemas(train, test):
    if train.schema.content_hash() != test.schema.content_hash():
        raise EvalError("train and test datasets use different schemas")


def _auc(y_true, scores):
    try:
        return float(roc_auc_score(y_true, scores))
    except ValueError as exc:
        raise EvalError(f"cannot score AUC: {exc}") from exc


# ---------------------------------------------------------------------------
# recurrent recipes


def _rnn_features(dataset, layout, spec, dyn_scaler, static_scaler, statics_raw):
    statics = static_scaler.transform(statics_raw)
    statics = np.nan_to_num(statics, nan=0.0, posinf=0.0, neginf=0.0)
    feats = []
    for i, inst in enumerate(dataset.instances):
        observed = layout.expand_mask(inst.M_x).astype(bool)
        scaled = dyn_scaler.transform(inst.X)
        if spec.kind == "zeroRNN":
            filled = np.where(observed, scaled, 0.0)
            extra = inst.M_x.astype(np.float64)
        else:
            pre = carry_forward(np.where(observed, scaled, 0.0), observed)
            filled = np.where(observed, scaled, pre)
            extra = lag_matrix(inst.M_x, inst.t)
        static_block = np.repeat(statics[i : i + 1], inst.length, axis=0)
        feats.append(np.concatenate([static_block, filled, extra], axis=1))
    return feats


def _run_rnn(train, test, spec, label, seed):
    layout = train.schema.layout
    dyn_scaler = _dynamics_scaler(train, layout, spec.scaling)
    train_statics = _static_matrix(train, layout, label)
    static_scaler = _fit_scaler(train_statics, spec.scaling)
    hidden, epochs = spec.resolved()

    feats = _rnn_features(train, layout, spec, dyn_scaler, static_scaler, train_statics)
    torch.manual_seed(seed)
    model = SequenceClassifier(feats[0].shape[1], hidden, cell="gru")
    labels = class_labels(train, label).astype(np.float64)
    train_classifier(
        model,
        feats,
        labels,
        epochs=epochs,
        batch_size=spec.batch_size,
        lr=spec.lr,
        seed=seed + 1,
    )

    test_statics = _static_matrix(test, layout, label)
    test_feats = _rnn_features(
        test, layout, spec, dyn_scaler, static_scaler, test_statics
    )
    return _auc(class_labels(test, label), classifier_logits(model, test_feats))


# ---------------------------------------------------------------------------
# hand-engineered statistics + logistic regression


def _skewness(values):
    """Adjusted Fisher-Pearson sample skewness; 0 when undefined (n < 3 or flat)."""
    if values.size < 3 or np.ptp(values) == 0:
        return 0.0
    out = scipy_stats.skew(values, bias=False)
    return float(out) if np.isfinite(out) else 0.0


def _window_steps(times, mode, frac):
    if mode == "full":
        return np.ones(times.shape[0], dtype=bool)
    span = times[-1] - times[0]
    if mode == "first":
        return times - times[0] <= frac * span
    return times >= times[-1] - frac * span


def _group_values(inst, layout):
    """One numeric column per dynamic feature (category index for categoricals)."""
    cols = []
    for g in layout.dynamic_groups:
        if g.kind == CONTINUOUS:
            cols.append(inst.X[:, g.start])
        else:
            cols.append(inst.X[:, g.start : g.stop].argmax(axis=1).astype(np.float64))
    return np.stack(cols, axis=1)


def lr_feature_matrix(dataset) -> np.ndarray:
    """Hand-engineered statistics matrix, shape (n, 42 * K).

    For each dynamic feature, 6 statistics (min, max, mean, std, skew,
    count of measurements) over 7 windows (full series, then the first
    10/25/50% and last 50/25/10% of elapsed time), computed on observed
    values only. Windows with no measurement yield NaN for later train-mean
    imputation. Column order: feature-major, then window, then statistic.
    """
    layout = dataset.schema.layout
    out = np.empty((len(dataset.instances), 42 * layout.K), dtype=np.float64)
    for i, inst in enumerate(dataset.instances):
        values = _group_values(inst, layout)
        col = 0
        for j in range(layout.K):
            observed = inst.M_x[:, j] == 1
            for mode, frac in WINDOWS:
                v = values[_window_steps(inst.t, mode, frac) & observed, j]
                if v.size == 0:
                    out[i, col : col + 6] = np.nan
                else:
                    out[i, col : col + 6] = (
                        v.min(),
                        v.max(),
                        v.mean(),
                        v.std(),
                        _skewness(v),
                        float(v.size),
                    )
                col += 6
    return out


def _run_lr(train, test, spec, label, seed):
    f_train = lr_feature_matrix(train)
    f_test = lr_feature_matrix(test)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        means = np.nanmean(f_train, axis=0)
    means = np.nan_to_num(means, nan=0.0)
    f_train = np.where(np.isnan(f_train), means, f_train)
    f_test = np.where(np.isnan(f_test), means, f_test)
    scaler = _make_scaler(spec.scaling).fit(f_train)
    clf = LogisticRegression(C=0.001, max_iter=1000, random_state=seed)
    clf.fit(scaler.transform(f_train), class_labels(train, label))
    scores = clf.predict_proba(scaler.transform(f_test))[:, 1]
    return _auc(class_labels(test, label), scores)


# ---------------------------------------------------------------------------
# regular-interval resampling + LSTM


def _normal_vector(train, layout):
    """Per-column fallback value for empty bins, in encoded units.

    A feature's configured normal value wins; otherwise the train-set mean
    of its observed encoded entries (0 if never observed).
    """
    schema = train.schema
    by_name = {f.name: f for f in schema.features}
    stacked = np.concatenate(
        [
            np.where(layout.expand_mask(inst.M_x) == 1, inst.X, np.nan)
            for inst in train.instances
        ]
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        normal = np.nan_to_num(np.nanmean(stacked, axis=0), nan=0.0)
    for g in layout.dynamic_groups:
        f = by_name[g.name]
        if g.kind == CONTINUOUS and f.normal_value is not None:
            normal[g.start] = schema._scale(f, f.normal_value)
    return normal


def _resample_bins(inst, layout, n_bins, width_raw, time_unit, normal):
    values = np.full((n_bins, layout.d_x), np.nan)
    binmask = np.zeros((n_bins, layout.K))
    observed = layout.expand_mask(inst.M_x)
    for i in range(inst.length):
        b = min(int(inst.t[i] * time_unit / width_raw), n_bins - 1)
        row = observed[i] == 1
        values[b, row] = inst.X[i, row]
        binmask[b] = np.maximum(binmask[b], inst.M_x[i])
    return np.where(np.isnan(values), normal, values), binmask


def _run_discrete(train, test, spec, label, seed):
    layout = train.schema.layout
    time_unit = train.schema.time_unit
    n_bins = max(int(np.ceil(time_unit / spec.bin_width)), 1)
    normal = _normal_vector(train, layout)

    def features(ds, scaler=None):
        pairs = [
            _resample_bins(inst, layout, n_bins, spec.bin_width, time_unit, normal)
            for inst in ds.instances
        ]
        values = np.stack([p[0] for p in pairs])
        masks = np.stack([p[1] for p in pairs])
        if scaler is None:
            scaler = StandardScaler().fit(values.reshape(-1, layout.d_x))
        scaled = scaler.transform(values.reshape(-1, layout.d_x)).reshape(values.shape)
        return list(np.concatenate([scaled, masks], axis=2)), scaler

    feats, scaler = features(train)
    hidden, epochs = spec.resolved()
    torch.manual_seed(seed)
    model = SequenceClassifier(feats[0].shape[1], hidden, cell="lstm")
    train_classifier(
        model,
        feats,
        class_labels(train, label).astype(np.float64),
        epochs=epochs,
        batch_size=spec.batch_size,
        lr=spec.lr,
        seed=seed + 1,
    )
    test_feats, _ = features(test, scaler)
    return _auc(class_labels(test, label), classifier_logits(model, test_feats))


def run_downstream(train, test, spec: DownstreamSpec, *, label: str, seed=0) -> float:
    """Train the spec's classifier on `train`, return ROC AUC on `test`."""
    _check_schemas(train, test)
    labels = class_labels(train, label)
    if np.unique(labels).size < 2:
        raise EvalError("training labels contain a single class")
    if spec.kind == "LR":
        return _run_lr(train, test, spec, label, seed)
    if spec.kind == "discreteLSTM":
        return _run_discrete(train, test, spec, label, seed)
    return _run_rnn(train, test, spec, label, seed)
