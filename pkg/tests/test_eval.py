"""Evaluation metrics: patterns, hand features, downstream AUCs, two-sample scores."""

import json

import numpy as np
import pytest
from scipy import stats as scipy_stats

from helpers import complete_dataset, labeled_split, missing_dataset
from tsgen import Dataset, TimeSeriesInstance
from tsgen.errors import ConfigError, EvalError
from tsgen.evaluation import (
    DownstreamSpec,
    class_labels,
    default_grid,
    discriminative_score,
    evaluate_pair,
    heatmap_agreement,
    lr_feature_matrix,
    missing_rate_vectors,
    pca_project,
    pearson_matrix,
    pearson_missing_heatmap,
    predictive_score,
    render_report,
    rnn_grid,
    run_downstream,
)
from tsgen.evaluation.downstream import _skewness
from tsgen.evaluation.scores import _two_sample_accuracy


def shuffle_labels(ds, label, seed=0):
    """Same dataset with the label column permuted across instances."""
    g = next(x for x in ds.schema.layout.global_groups if x.name == label)
    perm = np.random.default_rng(seed).permutation(len(ds.instances))
    out = []
    for i, inst in enumerate(ds.instances):
        y = inst.y.copy()
        y[g.start : g.stop] = ds.instances[perm[i]].y[g.start : g.stop]
        out.append(TimeSeriesInstance(inst.X, y, inst.M_x, inst.m_y, inst.t))
    return Dataset(ds.schema, out, split=ds.split)


# ---------------------------------------------------------------------------
# missing-pattern diagnostics


def test_missing_rate_vectors():
    full = complete_dataset(6, 5, 2, seed=0)
    assert np.array_equal(missing_rate_vectors(full), np.zeros((6, 2)))

    ds = missing_dataset(10, 3, seed=1)
    inst = ds.instances[0]
    M = np.ones((4, 3), dtype=np.uint8)
    M[:3, 1] = 0
    patched = TimeSeriesInstance(
        np.zeros((4, inst.X.shape[1])), inst.y, M, inst.m_y, np.arange(4.0)
    )
    rates = missing_rate_vectors(Dataset(ds.schema, [patched] + ds.instances[1:]))
    assert rates[0, 1] == 0.75 and rates[0, 0] == 0.0

    sampled = missing_rate_vectors(ds, sample=4, seed=0)
    assert sampled.shape == (4, 3)


def test_pearson_matrix_matches_pairwise_formula():
    rng = np.random.default_rng(3)
    rows = rng.random((40, 6))
    corr = pearson_matrix(rows)
    assert np.array_equal(corr, corr.T)
    assert np.allclose(np.diag(corr), 1.0)
    for a in range(6):
        for b in range(6):
            expected = scipy_stats.pearsonr(rows[:, a], rows[:, b]).statistic
            assert abs(corr[a, b] - expected) < 1e-12


def test_pearson_constant_and_identical_columns():
    rng = np.random.default_rng(0)
    rows = rng.random((30, 4))
    rows[:, 1] = rows[:, 0]  # identical pair
    rows[:, 3] = 0.25  # constant
    corr = pearson_matrix(rows)
    assert corr[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(corr[3] == 0.0) and np.all(corr[:, 3] == 0.0)
    assert corr[0, 0] == 1.0 and corr[2, 2] == 1.0


def test_pearson_heatmap_guards():
    ds = missing_dataset(1, 2, seed=0)
    with pytest.raises(EvalError):
        pearson_missing_heatmap(ds)


def test_heatmap_agreement():
    rng = np.random.default_rng(5)
    rows = rng.random((25, 5))
    corr = pearson_matrix(rows)
    assert heatmap_agreement(corr, corr) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(EvalError):
        heatmap_agreement(corr, np.eye(4))
    with pytest.raises(EvalError):
        heatmap_agreement(np.eye(5), np.eye(5))  # constant triangles


def test_pca_projection():
    # rank-1 input: second coordinate identically zero
    line = np.outer(np.linspace(0, 1, 20), [1.0, 2.0, -0.5])
    coords = pca_project(line)
    assert np.allclose(coords[:, 1], 0.0)

    rng = np.random.default_rng(1)
    cloud = rng.normal(size=(50, 8))
    coords = pca_project(cloud)
    assert coords.shape == (50, 2)
    assert coords[:, 0].var() >= coords[:, 1].var()
    assert np.allclose(coords.mean(axis=0), 0.0, atol=1e-9)
    assert np.array_equal(coords, pca_project(cloud))

    assert np.array_equal(pca_project(np.ones((10, 3))), np.zeros((10, 2)))
    with pytest.raises(EvalError):
        pca_project(cloud[:1])


# ---------------------------------------------------------------------------
# hand-engineered features


def test_lr_feature_matrix_shape_and_count_stat():
    ds = complete_dataset(8, 11, 3, seed=2)
    feats = lr_feature_matrix(ds)
    assert feats.shape == (8, 42 * 3)
    # full-series count statistic (window 0, stat 5) equals l when fully observed
    for j in range(3):
        assert np.all(feats[:, j * 42 + 5] == 11.0)


def test_lr_feature_windows_oracle():
    ds = missing_dataset(3, 2, seed=0)
    t = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    X = np.array([[0.2, 0.0], [0.9, 0.0], [0.4, 0.0], [0.1, 0.0], [0.6, 0.0]])
    M = np.ones((5, 2), dtype=np.uint8)
    M[:, 1] = 0  # feature 1 never observed
    X[:, 1] = 0.0
    inst = TimeSeriesInstance(X, ds.instances[0].y, M, ds.instances[0].m_y, t)
    row = lr_feature_matrix(Dataset(ds.schema, [inst]))[0]

    # feature 0, window "first 50% of time" = steps with t <= 2.0 (index 3 in WINDOWS)
    v = np.array([0.2, 0.9, 0.4])
    got = row[0 * 42 + 3 * 6 : 0 * 42 + 3 * 6 + 6]
    expected = [v.min(), v.max(), v.mean(), v.std(), _skewness(v), 3.0]
    assert np.allclose(got, expected)

    # never-observed feature: every window NaN for later train-mean imputation
    assert np.isnan(row[42:84]).all()


def test_skewness_definition():
    assert _skewness(np.array([1.0, 2.0])) == 0.0
    assert _skewness(np.array([3.0, 3.0, 3.0, 3.0])) == 0.0
    v = np.array([1.0, 2.0, 3.0, 9.0])
    assert _skewness(v) == pytest.approx(scipy_stats.skew(v, bias=False))


# ---------------------------------------------------------------------------
# downstream specs and classifiers


def test_downstream_spec_validation():
    with pytest.raises(ConfigError):
        DownstreamSpec("forest", "min-max")
    with pytest.raises(ConfigError):
        DownstreamSpec("zeroRNN", "robust")
    with pytest.raises(ConfigError):
        DownstreamSpec("discreteLSTM", "min-max")
    with pytest.raises(ConfigError):
        DownstreamSpec("discreteLSTM", "standardization", bin_width=0.0)
    assert DownstreamSpec("LR", "min-max").name == "LR/min-max"
    grid = default_grid()
    assert len(grid) == 7
    assert sum(s.kind == "discreteLSTM" for s in grid) == 1
    assert len(rnn_grid()) == 4
    assert DownstreamSpec("zeroRNN", "min-max").resolved() == (32, 40)
    assert DownstreamSpec("discreteLSTM", "standardization").resolved() == (16, 30)


def test_class_labels_and_guards():
    train, test = labeled_split(n_train=12, n_test=8, seed=0)
    labels = class_labels(train, "lab")
    assert set(labels) == {0, 1} and labels.shape == (12,)
    with pytest.raises(EvalError):
        class_labels(train, "nope")
    with pytest.raises(EvalError):
        class_labels(train, "__length__")  # continuous, not a class label

    spec = DownstreamSpec("zeroRNN", "min-max", hidden=4, epochs=1)
    other = missing_dataset(8, 3, seed=9)
    with pytest.raises(EvalError):
        run_downstream(train, other, spec, label="lab")

    one_class = Dataset(
        train.schema, [i for i, l in zip(train.instances, labels) if l == 1]
    )
    with pytest.raises(EvalError):
        run_downstream(one_class, test, spec, label="lab")


def test_downstream_controls_order():
    train, test = labeled_split(n_train=110, n_test=80, d=3, seed=4, missing=0.2)
    shuffled = shuffle_labels(train, "lab", seed=1)
    specs = [
        DownstreamSpec("LR", "min-max"),
        DownstreamSpec("LR", "standardization"),
        DownstreamSpec("zeroRNN", "standardization", hidden=16, epochs=40, batch_size=32),
        DownstreamSpec("lastRNN", "min-max", hidden=16, epochs=40, batch_size=32),
        DownstreamSpec("discreteLSTM", "standardization", hidden=16, epochs=30, batch_size=32),
    ]
    for spec in specs:
        auc = run_downstream(train, test, spec, label="lab", seed=0)
        noise = run_downstream(shuffled, test, spec, label="lab", seed=0)
        assert 0.0 <= auc <= 1.0 and 0.0 <= noise <= 1.0
        assert auc > 0.95, f"{spec.name}: separable control too weak ({auc:.3f})"
        assert auc - noise >= 0.3, f"{spec.name}: no gap over shuffled labels"


def test_downstream_deterministic():
    train, test = labeled_split(n_train=30, n_test=20, seed=6)
    spec = DownstreamSpec("lastRNN", "standardization", hidden=8, epochs=4)
    a = run_downstream(train, test, spec, label="lab", seed=3)
    b = run_downstream(train, test, spec, label="lab", seed=3)
    assert a == b


# ---------------------------------------------------------------------------
# two-sample scores


def test_discriminative_label_swap_symmetry():
    real = complete_dataset(30, 8, 2, seed=0)
    fake = Dataset(real.schema, complete_dataset(30, 8, 2, seed=1).instances)
    acc = _two_sample_accuracy(real, fake, seed=2, hidden=8, epochs=5)
    flipped = _two_sample_accuracy(
        real, fake, seed=2, hidden=8, epochs=5, flip_labels=True
    )
    assert acc == flipped


def test_discriminative_controls():
    base = complete_dataset(300, 10, 2, seed=7)
    half_a = Dataset(base.schema, base.instances[:150])
    half_b = Dataset(base.schema, base.instances[150:])
    kw = {"hidden": 8, "epochs": 30, "batch_size": 32}
    same = discriminative_score(half_a, half_b, seed=0, **kw)
    assert same < 0.1

    constant = [
        TimeSeriesInstance(
            np.full_like(inst.X, 0.5), inst.y, inst.M_x, inst.m_y, inst.t
        )
        for inst in half_b.instances
    ]
    separable = discriminative_score(
        half_a, Dataset(base.schema, constant), seed=0, **kw
    )
    assert separable > 0.4


def test_discriminative_guards():
    ds = complete_dataset(6, 5, 2, seed=0)
    with pytest.raises(EvalError):
        discriminative_score(Dataset(ds.schema, ds.instances[:1]), ds)
    with pytest.raises(EvalError):
        discriminative_score(ds, missing_dataset(6, 2, seed=0))


def test_predictive_constant_dataset():
    ds = complete_dataset(20, 6, 2, seed=0)
    constant = Dataset(
        ds.schema,
        [
            TimeSeriesInstance(
                np.full_like(inst.X, 0.4), inst.y, inst.M_x, inst.m_y, inst.t
            )
            for inst in ds.instances
        ],
    )
    mae = predictive_score(constant, constant, seed=0, hidden=8, epochs=80)
    assert mae < 0.02


def test_predictive_guards():
    ds = complete_dataset(10, 6, 2, seed=0)
    with pytest.raises(EvalError):
        predictive_score(ds, missing_dataset(10, 2, seed=0))
    short = Dataset(
        ds.schema,
        [
            TimeSeriesInstance(
                inst.X[:1], inst.y, inst.M_x[:1], inst.m_y, inst.t[:1]
            )
            for inst in ds.instances
        ],
    )
    with pytest.raises(EvalError):
        predictive_score(short, ds)


def test_scores_deterministic():
    real = complete_dataset(30, 8, 2, seed=0)
    fake = Dataset(real.schema, complete_dataset(30, 8, 2, seed=3).instances)
    kw = {"hidden": 8, "epochs": 4}
    assert discriminative_score(real, fake, seed=1, **kw) == discriminative_score(
        real, fake, seed=1, **kw
    )
    assert predictive_score(fake, real, seed=1, **kw) == predictive_score(
        fake, real, seed=1, **kw
    )


# ---------------------------------------------------------------------------
# report assembly


def test_evaluate_pair_incomplete(tmp_path):
    train, test = labeled_split(n_train=50, n_test=40, seed=0)
    report = evaluate_pair(
        train,
        test,
        real_test=test,
        seeds=[0],
        label="lab",
        grid=rnn_grid(hidden=8, epochs=5),
        discriminative_kwargs={"hidden": 8, "epochs": 5},
        projection_sample=25,
    )
    assert report.mode == "incomplete"
    assert 0.0 <= report.discriminative.mean <= 0.5
    assert report.discriminative.std == 0.0  # single seed
    assert set(report.tstr) == {s.name for s in rnn_grid()}
    for summary in list(report.tstr.values()) + list(report.trtr.values()):
        assert 0.0 <= summary.mean <= 1.0 and summary.std == 0.0
    heat = np.asarray(report.heatmap_real)
    assert np.array_equal(heat, heat.T)
    constant = set(report.constant_missing)
    for j, name in enumerate(report.feature_names):
        if name not in constant:
            assert heat[j, j] == 1.0
    assert report.projection_real.shape == (25, 2)

    paths = render_report(report, tmp_path)
    names = {p.name for p in paths}
    assert {
        "report.json",
        "metrics.csv",
        "downstream.csv",
        "missing_rates.csv",
        "heatmap_real.png",
        "heatmap_synthetic.png",
        "projection.png",
    } <= names
    loaded = json.loads((tmp_path / "report.json").read_text())
    assert loaded["tstr_average"]["values"] == report.tstr_average.values
    assert (tmp_path / "heatmap_real.png").stat().st_size > 0


def test_evaluate_pair_complete_and_mode_guards(tmp_path):
    real = complete_dataset(40, 8, 2, seed=0)
    synth = Dataset(real.schema, complete_dataset(40, 8, 2, seed=9).instances)
    report = evaluate_pair(
        real,
        synth,
        seeds=[0, 1],
        discriminative_kwargs={"hidden": 8, "epochs": 4},
        predictive_kwargs={"hidden": 8, "epochs": 10},
        projection_sample=20,
    )
    assert report.mode == "complete"
    assert report.predictive is not None and report.predictive_oracle is not None
    assert len(report.predictive.values) == 2
    assert report.tstr == {} and report.heatmap_real is None
    assert report.projection_real.shape == (20, 2)
    paths = render_report(report, tmp_path)
    assert {"report.json", "metrics.csv", "projection.png"} <= {p.name for p in paths}

    with pytest.raises(ConfigError):
        evaluate_pair(real, synth, seeds=[0], grid=rnn_grid())
    train, test = labeled_split(n_train=10, n_test=10, seed=0)
    with pytest.raises(ConfigError):
        evaluate_pair(train, test, seeds=[0], include_discriminative=False)
    with pytest.raises(ConfigError):
        evaluate_pair(real, synth, seeds=[])
