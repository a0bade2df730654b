import numpy as np
import pytest

from tsgen import (
    DataError,
    RawSeries,
    TimeSeriesInstance,
    WindowError,
    carry_forward,
    compute_time_lags,
    extract_windows,
    lag_matrix,
)


def oracle_lags(mask, t):
    """Independent recurrence walker used as the reference implementation."""
    l = len(t)
    k = mask.shape[1]
    out = [[0.0] * k for _ in range(l)]
    for j in range(k):
        for i in range(1, l):
            gap = t[i] - t[i - 1]
            if mask[i - 1][j] == 1:
                out[i][j] = gap
            else:
                out[i][j] = out[i - 1][j] + gap
    return np.array(out)


def test_lag_all_observed_reduces_to_intervals():
    mask = np.ones((3, 1), dtype=np.uint8)
    t = np.array([0.0, 0.1, 0.3])
    delta = lag_matrix(mask, t)
    assert np.allclose(delta[:, 0], [0.0, 0.1, 0.2])


def test_lag_accumulates_over_gaps():
    mask = np.array([[1], [0], [0]], dtype=np.uint8)
    t = np.array([0.0, 0.1, 0.3])
    delta = lag_matrix(mask, t)
    assert np.allclose(delta[:, 0], [0.0, 0.1, 0.3])


def test_lag_first_row_zero():
    mask = np.random.default_rng(0).integers(0, 2, (5, 4)).astype(np.uint8)
    t = np.cumsum(np.full(5, 0.1))
    assert np.all(lag_matrix(mask, t)[0] == 0.0)


def test_lag_matches_independent_oracle():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        l = int(rng.integers(1, 30))
        k = int(rng.integers(1, 8))
        mask = (rng.random((l, k)) > 0.4).astype(np.uint8)
        t = np.cumsum(rng.uniform(1e-3, 0.2, l))
        assert np.array_equal(lag_matrix(mask, t), oracle_lags(mask, t))


def test_lag_column_properties():
    rng = np.random.default_rng(5)
    mask = (rng.random((40, 3)) > 0.5).astype(np.uint8)
    t = np.cumsum(rng.uniform(0.01, 0.1, 40))
    delta = lag_matrix(mask, t)
    assert np.all(delta[1:] > 0)
    assert np.all(delta.max(axis=0) <= t[-1] - t[0] + 1e-12)
    for j in range(3):
        for i in range(1, 40):
            if mask[i - 1, j] == 1:
                assert delta[i, j] == pytest.approx(t[i] - t[i - 1])
            else:
                assert delta[i, j] >= delta[i - 1, j]


def test_carry_forward_examples():
    X = np.array([[0.4], [0.0], [0.9]])
    obs = np.array([[1], [0], [1]])
    pre = carry_forward(X, obs)
    assert np.allclose(pre[:, 0], [0.0, 0.4, 0.4])

    X2 = np.arange(1, 6, dtype=float).reshape(-1, 1)
    pre2 = carry_forward(X2, np.ones_like(X2))
    assert np.allclose(pre2[1:, 0], X2[:-1, 0])
    assert pre2[0, 0] == 0.0


def test_compute_time_lags_wrapper():
    inst = TimeSeriesInstance(
        X=np.zeros((3, 2)),
        y=np.zeros(1),
        M_x=np.array([[1, 0], [0, 1], [1, 1]]),
        m_y=np.ones(1),
        t=np.array([0.0, 0.2, 0.5]),
    )
    lm = compute_time_lags(inst)
    assert np.array_equal(lm.delta, oracle_lags(inst.M_x, inst.t))


def test_instance_invariants():
    ok = dict(
        X=np.zeros((2, 1)), y=np.zeros(1), M_x=np.ones((2, 1)), m_y=np.ones(1),
        t=np.array([0.0, 1.0]),
    )
    inst = TimeSeriesInstance(**ok)
    assert inst.length == 2
    with pytest.raises(ValueError):
        inst.X[0, 0] = 5.0  # instances are frozen
    with pytest.raises(DataError):
        TimeSeriesInstance(**{**ok, "t": np.array([1.0, 0.5])})
    with pytest.raises(DataError):
        TimeSeriesInstance(**{**ok, "M_x": np.full((2, 1), 2)})
    with pytest.raises(DataError):
        TimeSeriesInstance(**{**ok, "X": np.zeros((3, 1))})
    with pytest.raises(DataError):
        TimeSeriesInstance(
            X=np.zeros((0, 1)), y=np.zeros(1), M_x=np.ones((0, 1)), m_y=np.ones(1), t=[]
        )


def _complete_series(n):
    return RawSeries(
        "s",
        np.arange(n, dtype=float),
        {"v": np.arange(n, dtype=float).astype(object)},
    )


def test_windows_count_and_contents():
    wins = extract_windows(_complete_series(26), 24)
    assert len(wins) == 3
    for k, w in enumerate(wins):
        assert len(w) == 24
        assert list(w.values["v"]) == list(range(k, k + 24))


def test_windows_count_property():
    for n in (24, 25, 30, 100):
        assert len(extract_windows(_complete_series(n), 24)) == n - 24 + 1


def test_windows_errors():
    with pytest.raises(WindowError):
        extract_windows(_complete_series(10), 24)
    gappy = RawSeries("g", [0.0, 1.0], {"v": [1.0, None]})
    with pytest.raises(DataError):
        extract_windows(gappy, 2)
