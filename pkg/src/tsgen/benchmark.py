"""Synthetic benchmark with value-dependent missingness.

Generator, fully documented so results are reproducible from this file
alone:

* Each instance draws a latent trend a ~ N(0, 1); the downstream label
  is outcome = 1 when a > 0. Lengths are uniform integers in [12, 24]
  and timestamps advance by U(0.5, 1.5) increments from t = 0.
* A smooth per-step state s_i = a * (t_i / T) + random-walk noise drives
  all eight dynamic features: v_j(i) = sigmoid(GAIN[j] * s_i + OFFSET[j]
  + N(0, 0.15)), so the features co-vary through the shared state and
  the label is recoverable from any of them.
* Missingness is value-dependent (the informative regime): feature j at
  step i is observed with probability
  sigmoid(ALPHA[j] + BETA[j] * 4 * (v_0(i) - 0.5)), a logistic function
  of the driver feature's underlying value at that step. Positive BETA
  means high driver values make the feature more visible; negative
  means less. Steps that would lose every feature keep the driver.
* The label is always observed.

The default split is 5000 training and 1000 test instances drawn from
the same process with different seeds.
"""

from __future__ import annotations

import numpy as np

from .instances import RawSeries
from .io import write_delimited, write_feature_spec
from .schema import CATEGORICAL, CONTINUOUS, DYNAMIC, GLOBAL, FeatureDef
from .seeding import numpy_rng, stage_seed

N_FEATURES = 8
MIN_LEN, MAX_LEN = 12, 24
TIME_UNIT = 40.0  # upper bound on total duration: 24 steps * 1.5 max increment

GAIN = np.array([1.5, 1.2, -1.0, 0.8, -1.3, 1.0, -0.7, 0.9])
OFFSET = np.array([0.0, 0.3, -0.2, 0.1, 0.2, -0.3, 0.0, -0.1])
ALPHA = np.array([1.8, 0.8, 0.4, 0.0, -0.4, 0.8, 0.0, -0.8])
BETA = np.array([1.0, 1.5, -1.5, 2.0, -2.0, 0.0, 1.0, -1.0])

LABEL = "outcome"


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def benchmark_features() -> tuple[list[FeatureDef], dict]:
    defs = [
        FeatureDef(f"v{j}", CONTINUOUS, DYNAMIC) for j in range(N_FEATURES)
    ]
    defs.append(FeatureDef(LABEL, CATEGORICAL, GLOBAL))
    options = {"id_column": "id", "time_column": "time", "time_unit": TIME_UNIT}
    return defs, options


def _one_instance(key: str, rng: np.random.Generator) -> RawSeries:
    a = rng.normal()
    l = int(rng.integers(MIN_LEN, MAX_LEN + 1))
    t = np.cumsum(rng.uniform(0.5, 1.5, size=l))
    t -= t[0]
    span = max(t[-1], 1e-9)

    walk = np.cumsum(rng.normal(0.0, 0.08, size=l))
    state = a * (t / span) + walk
    noise = rng.normal(0.0, 0.15, size=(l, N_FEATURES))
    values = _sigmoid(state[:, None] * GAIN[None, :] + OFFSET[None, :] + noise)

    driver = values[:, 0]
    p_obs = _sigmoid(ALPHA[None, :] + BETA[None, :] * 4.0 * (driver[:, None] - 0.5))
    observed = rng.random((l, N_FEATURES)) < p_obs
    observed[~observed.any(axis=1), 0] = True

    cols = {}
    for j in range(N_FEATURES):
        col = np.full(l, None, dtype=object)
        seen = observed[:, j]
        col[seen] = values[seen, j]
        cols[f"v{j}"] = col
    return RawSeries(key, t, cols, {LABEL: str(int(a > 0.0))})


def benchmark_records(count: int, seed: int = 0, prefix: str = "s") -> list[RawSeries]:
    rng = numpy_rng(seed)
    return [_one_instance(f"{prefix}{i}", rng) for i in range(count)]


def write_benchmark(
    out_dir,
    n_train: int = 5000,
    n_test: int = 1000,
    master_seed: int = 0,
) -> dict:
    """Write train/test tables plus the schema spec; returns the paths."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    defs, options = benchmark_features()
    seed = stage_seed(master_seed, "benchmark")
    train = benchmark_records(n_train, seed=seed, prefix="tr")
    test = benchmark_records(n_test, seed=seed + 1, prefix="te")

    paths = {
        "schema": out_dir / "schema.yaml",
        "train": out_dir / "train.csv",
        "test": out_dir / "test.csv",
    }
    write_feature_spec(defs, options, paths["schema"])
    write_delimited(train, defs, paths["train"])
    write_delimited(test, defs, paths["test"])
    return paths
