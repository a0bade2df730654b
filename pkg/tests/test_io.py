import numpy as np
import pytest

from tsgen import DataError, Dataset, FeatureDef, RawSeries, SchemaError, fit_schema, transform
from tsgen.io import (
    load_dataset,
    read_delimited,
    read_feature_spec,
    read_series_table,
    save_dataset,
    suggest_feature_kinds,
    write_delimited,
    write_feature_spec,
)

DEFS = [
    FeatureDef("hr", "continuous", "dynamic"),
    FeatureDef("rhythm", "categorical", "dynamic"),
    FeatureDef("age", "continuous", "global"),
    FeatureDef("outcome", "categorical", "global"),
]


def _records():
    r1 = RawSeries(
        "a",
        [0.0, 1.5, 4.0],
        {"hr": [80.0, None, 140.0], "rhythm": ["sr", "af", None]},
        {"age": 71.25, "outcome": "dead"},
    )
    r2 = RawSeries(
        "b",
        [0.5, 2.0],
        {"hr": [60.0, None], "rhythm": [None, "sr"]},
        {"age": None, "outcome": "alive"},
    )
    return [r1, r2]


def test_delimited_round_trip(tmp_path):
    path = tmp_path / "rows.csv"
    write_delimited(_records(), DEFS, path)
    back = read_delimited(path, DEFS)
    assert [r.key for r in back] == ["a", "b"]
    for orig, got in zip(_records(), back):
        assert np.allclose(got.times, orig.times)
        for name in ("hr", "rhythm"):
            assert list(got.values[name]) == list(orig.values[name])
        assert got.globals == orig.globals


def test_read_takes_first_non_empty_global(tmp_path):
    path = tmp_path / "rows.csv"
    path.write_text(
        "id,time,hr,rhythm,age,outcome\n"
        "a,0.0,80.0,sr,,\n"
        "a,1.0,90.0,sr,33.5,alive\n"
        "a,2.0,95.0,sr,99.0,dead\n"
    )
    rec = read_delimited(path, DEFS)[0]
    assert rec.globals["age"] == 33.5
    assert rec.globals["outcome"] == "alive"


def test_read_sorts_and_rejects_duplicate_times(tmp_path):
    path = tmp_path / "rows.csv"
    path.write_text("id,time,hr,rhythm,age,outcome\na,2.0,90,sr,1,x\na,0.0,80,sr,1,x\n")
    rec = read_delimited(path, DEFS)[0]
    assert list(rec.times) == [0.0, 2.0]
    assert list(rec.values["hr"]) == [80.0, 90.0]

    path.write_text("id,time,hr,rhythm,age,outcome\na,1.0,90,sr,1,x\na,1.0,80,sr,1,x\n")
    with pytest.raises(DataError):
        read_delimited(path, DEFS)


def test_read_missing_column_and_bad_cells(tmp_path):
    path = tmp_path / "rows.csv"
    path.write_text("id,time,hr\na,0.0,80\n")
    with pytest.raises(DataError):
        read_delimited(path, DEFS)
    path.write_text("id,time,hr,rhythm,age,outcome\na,0.0,not_a_number,sr,1,x\n")
    with pytest.raises(DataError):
        read_delimited(path, DEFS)


def test_series_table_reader(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text("Open,Close\n1.0,2.0\n3.0,4.0\n5.0,6.0\n")
    defs = [FeatureDef("Open", "continuous", "dynamic"), FeatureDef("Close", "continuous", "dynamic")]
    series = read_series_table(path, defs)
    assert len(series) == 3
    assert list(series.values["Open"]) == [1.0, 3.0, 5.0]
    assert list(series.times) == [0.0, 1.0, 2.0]


def test_dataset_round_trip_missing_rates_bit_identical(tmp_path):
    recs = _records()
    schema = fit_schema(recs, DEFS)
    ds = Dataset(schema, [transform(r, schema) for r in recs], split="train")
    path = tmp_path / "ds.npz"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.split == "train"
    assert back.schema.content_hash() == schema.content_hash()
    assert np.array_equal(back.dynamic_missing_rates(), ds.dynamic_missing_rates())
    assert np.array_equal(back.global_missing_rates(), ds.global_missing_rates())
    for a, b in zip(ds.instances, back.instances):
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.t, b.t)
        assert np.array_equal(a.M_x, b.M_x)
        assert np.array_equal(a.y, b.y)


def test_feature_spec_round_trip(tmp_path):
    path = tmp_path / "spec.yaml"
    defs = [
        FeatureDef("hr", "continuous", "dynamic", clamp=(20.0, 250.0), normal_value=80.0),
        FeatureDef("outcome", "categorical", "global", allow_other=True),
    ]
    write_feature_spec(defs, {"id_column": "pid", "time_column": "ts"}, path)
    back, options = read_feature_spec(path)
    assert back == defs
    assert options["id_column"] == "pid"
    assert options["time_column"] == "ts"


def test_feature_spec_rejects_unknown_keys(tmp_path):
    path = tmp_path / "spec.yaml"
    path.write_text("features:\n  - name: hr\nbogus: 1\n")
    with pytest.raises(SchemaError):
        read_feature_spec(path)
    path.write_text("features:\n  - name: hr\n    wat: 2\n")
    with pytest.raises(SchemaError):
        read_feature_spec(path)


def test_suggest_feature_kinds_is_advisory_only(tmp_path):
    path = tmp_path / "sample.csv"
    rows = ["v,c"] + [f"{i * 0.37},{'ab'[i % 2]}" for i in range(100)]
    path.write_text("\n".join(rows) + "\n")
    hints = suggest_feature_kinds(path)
    assert hints["v"] == "continuous"
    assert hints["c"] == "categorical"
