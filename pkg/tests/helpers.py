"""Shared toy-data builders for the test suite."""

import numpy as np

from tsgen import Dataset, FeatureDef, RawSeries, append_length_feature, fit_schema, transform


def complete_dataset(n=12, l=8, d=2, seed=0, labeled=True):
    """Fully observed sequences with sinusoid-plus-noise dynamics."""
    rng = np.random.default_rng(seed)
    defs = [FeatureDef(f"f{j}", "continuous", "dynamic") for j in range(d)]
    if labeled:
        defs.append(FeatureDef("lab", "categorical", "global"))
    recs = []
    for i in range(n):
        phase = rng.uniform(0, np.pi)
        cols = {}
        for j in range(d):
            base = np.sin(np.linspace(0, 2 * np.pi, l) + phase + j)
            cols[f"f{j}"] = (base + rng.normal(0, 0.1, l)).astype(object)
        globs = {"lab": str(i % 2)} if labeled else {}
        recs.append(RawSeries(str(i), np.arange(float(l)), cols, globs))
    schema = fit_schema(recs, defs, complete=True)
    return append_length_feature(Dataset(schema, [transform(r, schema) for r in recs]))


def labeled_split(n_train=80, n_test=60, d=3, seed=0, missing=0.25, max_len=10, separable=True):
    """Train/test datasets sharing one schema, label tied to feature 0's level.

    With separable=True class 1 sequences run high on feature 0 and class 0
    runs low, so every downstream classifier should find the label easily.
    """
    rng = np.random.default_rng(seed)
    defs = [FeatureDef(f"f{j}", "continuous", "dynamic") for j in range(d)]
    defs.append(FeatureDef("lab", "categorical", "global"))

    def build(n, offset):
        recs = []
        for i in range(n):
            l = int(rng.integers(4, max_len + 1))
            t = np.cumsum(rng.uniform(0.2, 1.0, l))
            cls = i % 2
            cols = {}
            for j in range(d):
                if j == 0 and separable:
                    level = 0.8 if cls == 1 else 0.2
                else:
                    level = rng.uniform(0.3, 0.7)
                vals = np.clip(level + rng.normal(0, 0.08, l), 0.0, 1.0)
                cols[f"f{j}"] = np.array(
                    [float(v) if rng.random() > missing else None for v in vals],
                    dtype=object,
                )
            recs.append(RawSeries(f"{offset}-{i}", t, cols, {"lab": str(cls)}))
        return recs

    train_recs = build(n_train, "tr")
    test_recs = build(n_test, "te")
    schema = fit_schema(train_recs, defs)
    train = append_length_feature(
        Dataset(schema, [transform(r, schema) for r in train_recs])
    )
    test = append_length_feature(
        Dataset(schema, [transform(r, schema) for r in test_recs], split="test")
    )
    return train, test


def missing_dataset(n=12, d=2, seed=0, missing=0.35, max_len=9):
    """Variable-length sequences with random gaps and a binary label."""
    rng = np.random.default_rng(seed)
    defs = [FeatureDef(f"f{j}", "continuous", "dynamic") for j in range(d)]
    defs.append(FeatureDef("lab", "categorical", "global"))
    recs = []
    for i in range(n):
        l = int(rng.integers(3, max_len + 1))
        t = np.cumsum(rng.uniform(0.2, 1.0, l))
        cols = {}
        for j in range(d):
            cols[f"f{j}"] = np.array(
                [float(rng.random()) if rng.random() > missing else None for _ in range(l)],
                dtype=object,
            )
        recs.append(RawSeries(str(i), t, cols, {"lab": str(i % 2)}))
    schema = fit_schema(recs, defs)
    return append_length_feature(Dataset(schema, [transform(r, schema) for r in recs]))
