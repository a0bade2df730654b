"""File formats: delimited series tables, schema specs, saved datasets.

The exchange format is a delimited text table with one row per
(series id, timestamp) pair, one column per feature and empty cells for
missing values. Global features repeat on every row of their series (a
value on the first row is enough). Schema specs are small YAML files;
encoded datasets persist as compressed npz archives with the fitted
schema embedded as JSON.
"""

from __future__ import annotations

import json

import numpy as np
import pandas as pd
import yaml

from .errors import DataError, SchemaError
from .instances import RawSeries, TimeSeriesInstance
from .schema import CONTINUOUS, Dataset, FeatureDef, SchemaDescriptor


def read_feature_spec(path) -> tuple[list[FeatureDef], dict]:
    """Parse a YAML schema spec into feature definitions plus table options.

    Recognized top-level keys: `features` (required list), `id_column`,
    `time_column`, `time_unit`. Unknown keys are rejected so typos fail
    loudly.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SchemaError(f"cannot parse schema spec {path}: {exc}") from exc
    if not isinstance(doc, dict) or "features" not in doc:
        raise SchemaError(f"schema spec {path} must be a mapping with a 'features' list")
    allowed = {"features", "id_column", "time_column", "time_unit"}
    unknown = set(doc) - allowed
    if unknown:
        raise SchemaError(f"unknown schema spec keys: {sorted(unknown)}")
    defs = []
    for entry in doc["features"]:
        if not isinstance(entry, dict) or "name" not in entry:
            raise SchemaError(f"malformed feature entry: {entry!r}")
        extra = set(entry) - {"name", "kind", "role", "clamp", "normal_value", "allow_other"}
        if extra:
            raise SchemaError(f"unknown keys on feature {entry['name']!r}: {sorted(extra)}")
        defs.append(
            FeatureDef(
                name=str(entry["name"]),
                kind=entry.get("kind", CONTINUOUS),
                role=entry.get("role", "dynamic"),
                clamp=tuple(entry["clamp"]) if entry.get("clamp") else None,
                normal_value=entry.get("normal_value"),
                allow_other=bool(entry.get("allow_other", False)),
            )
        )
    options = {
        "id_column": doc.get("id_column", "id"),
        "time_column": doc.get("time_column", "time"),
        "time_unit": doc.get("time_unit"),
    }
    return defs, options


def write_feature_spec(defs, options, path):
    doc = {
        "id_column": options.get("id_column", "id"),
        "time_column": options.get("time_column", "time"),
        "features": [],
    }
    if options.get("time_unit") is not None:
        doc["time_unit"] = options["time_unit"]
    for f in defs:
        entry = {"name": f.name, "kind": f.kind, "role": f.role}
        if f.clamp is not None:
            entry["clamp"] = list(f.clamp)
        if f.normal_value is not None:
            entry["normal_value"] = f.normal_value
        if f.allow_other:
            entry["allow_other"] = True
        doc["features"].append(entry)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def _parse_float(raw: str, what: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"cannot parse {what}: {raw!r}") from None


def read_delimited(path, defs, id_column="id", time_column="time", sep=",") -> list[RawSeries]:
    """Read raw series from a delimited table, one per id, sorted by time.

    Empty cells become missing values. Global feature values are taken
    from the first non-empty row of their series. Duplicate timestamps
    within one series are rejected.
    """
    try:
        frame = pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False)
    except (FileNotFoundError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read table {path}: {exc}") from exc
    missing_cols = [c for c in [id_column, time_column] + [f.name for f in defs] if c not in frame.columns]
    if missing_cols:
        raise DataError(f"table {path} lacks columns {missing_cols}")
    dynamic = [f for f in defs if f.role == "dynamic"]
    globals_ = [f for f in defs if f.role == "global"]
    records = []
    for key, group in frame.groupby(id_column, sort=False):
        times = np.array([_parse_float(v, f"timestamp of series {key!r}") for v in group[time_column]])
        order = np.argsort(times, kind="stable")
        times = times[order]
        if len(times) > 1 and np.any(np.diff(times) == 0):
            raise DataError(f"series {key!r} has duplicate timestamps")
        group = group.iloc[order]
        values = {}
        for f in dynamic:
            col = np.full(len(group), None, dtype=object)
            for i, raw in enumerate(group[f.name].to_numpy()):
                if raw == "":
                    continue
                col[i] = _parse_float(raw, f"{f.name!r}") if f.kind == CONTINUOUS else raw
            values[f.name] = col
        record_globals = {}
        for f in globals_:
            cell = next((raw for raw in group[f.name].to_numpy() if raw != ""), None)
            if cell is None:
                record_globals[f.name] = None
            else:
                record_globals[f.name] = _parse_float(cell, f"{f.name!r}") if f.kind == CONTINUOUS else cell
        records.append(RawSeries(key, times, values, record_globals))
    return records


def write_delimited(records, defs, path, id_column="id", time_column="time", sep=","):
    """Write raw series to a delimited table; globals repeat on every row."""
    dynamic = [f for f in defs if f.role == "dynamic"]
    globals_ = [f for f in defs if f.role == "global"]
    columns = [id_column, time_column] + [f.name for f in defs]
    rows = []
    for rec in records:
        glob_cells = {}
        for f in globals_:
            v = rec.globals.get(f.name)
            glob_cells[f.name] = "" if v is None else _format_cell(v)
        for i, t in enumerate(rec.times):
            row = {id_column: rec.key, time_column: _format_cell(float(t))}
            for f in dynamic:
                v = rec.values[f.name][i]
                row[f.name] = "" if v is None else _format_cell(v)
            row.update(glob_cells)
            rows.append(row)
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, sep=sep, index=False)


def _format_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_series_table(path, defs, sep=",") -> RawSeries:
    """Read a single complete series from a plain table (no id/time columns).

    Row order is step order; timestamps become 0..n-1. Intended for
    regularly sampled sources that will be cut into windows.
    """
    try:
        frame = pd.read_csv(path, sep=sep)
    except (FileNotFoundError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read table {path}: {exc}") from exc
    dynamic = [f for f in defs if f.role == "dynamic"]
    missing_cols = [f.name for f in dynamic if f.name not in frame.columns]
    if missing_cols:
        raise DataError(f"table {path} lacks columns {missing_cols}")
    if len(frame) == 0:
        raise DataError(f"table {path} is empty")
    values = {}
    for f in dynamic:
        col = pd.to_numeric(frame[f.name], errors="coerce").to_numpy()
        if np.isnan(col).any():
            raise DataError(f"column {f.name!r} of {path} has gaps or non-numeric cells")
        values[f.name] = col.astype(object)
    return RawSeries("0", np.arange(len(frame), dtype=np.float64), values)


# ---------------------------------------------------------------------------
# encoded dataset persistence


def save_dataset(dataset: Dataset, path):
    """Persist an encoded dataset as a compressed columnar archive."""
    lengths = np.array([inst.length for inst in dataset.instances], dtype=np.int64)
    if len(dataset.instances) == 0:
        raise DataError("refusing to save an empty dataset")
    X = np.concatenate([inst.X for inst in dataset.instances], axis=0)
    M = np.concatenate([inst.M_x for inst in dataset.instances], axis=0)
    t = np.concatenate([inst.t for inst in dataset.instances], axis=0)
    Y = np.stack([inst.y for inst in dataset.instances])
    MY = np.stack([inst.m_y for inst in dataset.instances])
    np.savez_compressed(
        path,
        schema=json.dumps(dataset.schema.to_dict(), sort_keys=True),
        split=dataset.split,
        lengths=lengths,
        X=X,
        M=M,
        t=t,
        Y=Y,
        MY=MY,
    )


def load_dataset(path) -> Dataset:
    try:
        with np.load(path, allow_pickle=False) as archive:
            schema = SchemaDescriptor.from_dict(json.loads(str(archive["schema"])))
            split = str(archive["split"])
            lengths = archive["lengths"]
            X, M, t = archive["X"], archive["M"], archive["t"]
            Y, MY = archive["Y"], archive["MY"]
    except (FileNotFoundError, OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot load dataset {path}: {exc}") from exc
    instances = []
    offset = 0
    for i, l in enumerate(lengths):
        sl = slice(offset, offset + int(l))
        instances.append(TimeSeriesInstance(X[sl], Y[i], M[sl], MY[i], t[sl]))
        offset += int(l)
    return Dataset(schema, instances, split=split)


def suggest_feature_kinds(path, sep=",", max_categories=20) -> dict:
    """Advisory only: guess continuous vs categorical from a sample table.

    Numeric columns with more than `max_categories` distinct values are
    suggested continuous, everything else categorical. Always review the
    result; nothing downstream trusts it.
    """
    frame = pd.read_csv(path, sep=sep, nrows=10_000)
    out = {}
    for name in frame.columns:
        col = pd.to_numeric(frame[name], errors="coerce")
        numeric = col.notna().mean() > 0.95
        out[name] = (
            CONTINUOUS
            if numeric and frame[name].nunique() > max_categories
            else "categorical"
        )
    return out
