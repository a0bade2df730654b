"""End-to-end commands: prepare, train, generate, evaluate, report.

Each command reads and writes plain files under one output directory:

    out/
      prepared/   train.npz, test.npz, summary.json
      models/     autoencoder.pt, bundle.pt, traces.json, thresholds.json,
                  checkpoints/
      synthetic/  data.csv, manifest.json
      report/     report.json, tables, figures

Commands are deterministic given the same config, seed, and inputs:
artifacts carry no timestamps, JSON is written with sorted keys, and the
master seed fans out to per-stage seeds through fixed offsets. Training
failures leave the artifacts of completed stages on disk, plus the last
good checkpoint of the failed stage when one exists.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .bundle import file_sha256, load_bundle, save_bundle
from .config import RunConfig
from .errors import ConfigError, DataError, TrainingError
from .evaluation import DownstreamSpec, EvalReport, evaluate_pair, render_report
from .instances import extract_windows
from .io import (
    load_dataset,
    read_delimited,
    read_feature_spec,
    read_series_table,
    save_dataset,
    write_delimited,
)
from .models import (
    calibrate_thresholds,
    generate_dataset,
    train_autoencoder,
    train_missing_autoencoder,
    train_wgan,
)
from .schema import (
    LENGTH_FEATURE,
    Dataset,
    append_length_feature,
    fit_schema,
    inverse_transform,
    transform,
)
from .seeding import stage_seed


class RunPaths:
    """Canonical artifact locations under one output directory."""

    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.prepared = self.root / "prepared"
        self.train_npz = self.prepared / "train.npz"
        self.test_npz = self.prepared / "test.npz"
        self.summary = self.prepared / "summary.json"
        self.models = self.root / "models"
        self.autoencoder = self.models / "autoencoder.pt"
        self.thresholds = self.models / "thresholds.json"
        self.traces = self.models / "traces.json"
        self.bundle = self.models / "bundle.pt"
        self.checkpoints = self.models / "checkpoints"
        self.synthetic = self.root / "synthetic"
        self.synthetic_csv = self.synthetic / "data.csv"
        self.manifest = self.synthetic / "manifest.json"
        self.report = self.root / "report"


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _read_json(path: Path, what: str) -> dict:
    if not path.exists():
        raise ConfigError(f"no {what} at {path}; run the earlier stage first")
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# prepare


def _read_raw(path, defs, options, window):
    if path is None:
        raise ConfigError("config lacks a data path")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"data file not found: {path}")
    if window is not None:
        series = read_series_table(path, defs)
        return extract_windows(series, window)
    return read_delimited(
        path, defs, id_column=options["id_column"], time_column=options["time_column"]
    )


def _encode_split(records, schema, split):
    dataset = Dataset(schema, [transform(r, schema) for r in records], split=split)
    return append_length_feature(dataset)


def _split_stats(dataset) -> dict:
    lengths = [inst.length for inst in dataset.instances]
    return {
        "instances": len(dataset),
        "avg_length": float(np.mean(lengths)),
        "max_length": int(max(lengths)),
    }


def cmd_prepare(config: RunConfig, out_dir) -> dict:
    """Fit the schema on training data and persist both encoded splits."""
    config.validate()
    paths = RunPaths(out_dir)
    if config.data.schema_spec is None:
        raise ConfigError("config lacks data.schema_spec")
    spec_path = Path(config.data.schema_spec)
    if not spec_path.exists():
        raise ConfigError(f"schema spec not found: {spec_path}")
    defs, options = read_feature_spec(spec_path)

    complete = config.mode == "complete"
    train_records = _read_raw(config.data.train_path, defs, options, config.data.window)
    schema = fit_schema(
        train_records, defs, time_unit=options["time_unit"], complete=complete
    )
    train = _encode_split(train_records, schema, "train")

    paths.prepared.mkdir(parents=True, exist_ok=True)
    save_dataset(train, paths.train_npz)
    summary = {
        "mode": config.mode,
        "schema_hash": train.schema.content_hash(),
        "time_unit": schema.time_unit,
        "max_length": schema.max_length,
        "id_column": options["id_column"],
        "time_column": options["time_column"],
        "train": _split_stats(train),
        "dynamic_missing_rates": {
            g.name: float(r)
            for g, r in zip(
                train.schema.layout.dynamic_groups, train.dynamic_missing_rates()
            )
        },
        "global_missing_rates": {
            g.name: float(r)
            for g, r in zip(
                train.schema.layout.global_groups, train.global_missing_rates()
            )
        },
    }

    if config.data.test_path is not None:
        test_records = _read_raw(config.data.test_path, defs, options, config.data.window)
        test = _encode_split(test_records, schema, "test")
        save_dataset(test, paths.test_npz)
        summary["test"] = _split_stats(test)

    _write_json(paths.summary, summary)
    return {"train": paths.train_npz, "summary": paths.summary}


# ---------------------------------------------------------------------------
# train


def _latest_checkpoint(paths: RunPaths, prefix: str):
    if not paths.checkpoints.exists():
        return None
    files = sorted(paths.checkpoints.glob(f"{prefix}_*.pt"))
    if not files:
        return None
    payload = torch.load(files[-1], map_location="cpu", weights_only=False)
    return payload["snapshot"]


def _checkpoint_writer(paths: RunPaths, stage: str, prefix: str):
    paths.checkpoints.mkdir(parents=True, exist_ok=True)

    def write(step: int, snapshot: dict):
        target = paths.checkpoints / f"{prefix}_{step:07d}.pt"
        torch.save({"stage": stage, "step": step, "snapshot": snapshot}, target)

    return write


def _save_failed_stage(paths: RunPaths, prefix: str, exc: TrainingError):
    if exc.checkpoint is None:
        return
    paths.checkpoints.mkdir(parents=True, exist_ok=True)
    torch.save(
        {"stage": prefix, "step": exc.checkpoint.get("epoch", exc.checkpoint.get("iteration", 0)), "snapshot": exc.checkpoint},
        paths.checkpoints / f"{prefix}_failed.pt",
    )


def _train_stage_one(config: RunConfig, dataset, paths: RunPaths, resume: bool):
    """Train (or reload) the autoencoder; returns (model, trace)."""
    from .bundle import _autoencoder_kwargs
    from .models import MissingSeriesAutoencoder, SeriesAutoencoder

    layout = dataset.schema.layout
    epochs, batch, sampling = config.training.resolve(config.mode)
    hidden = config.model.resolve_hidden(config.mode, layout.d_x)
    seed = stage_seed(config.seed, "autoencoder")

    if resume and paths.autoencoder.exists():
        payload = torch.load(paths.autoencoder, map_location="cpu", weights_only=False)
        cls = MissingSeriesAutoencoder if config.mode == "incomplete" else SeriesAutoencoder
        model = cls(layout, **payload["kwargs"])
        model.load_state_dict(payload["state"])
        model.eval()
        return model, payload["trace"]

    snapshot = _latest_checkpoint(paths, "ae") if resume else None
    cb = _checkpoint_writer(paths, "autoencoder", "ae")
    common = dict(
        epochs=epochs,
        batch_size=batch,
        lr=config.training.ae_lr,
        layers=config.model.layers,
        seed=seed,
        resume=snapshot,
        checkpoint_every=config.training.checkpoint_every_epochs,
        checkpoint_cb=cb,
    )
    try:
        if config.mode == "complete":
            model, trace = train_autoencoder(
                dataset, hidden=hidden, sampling_p=sampling, **common
            )
        else:
            model, trace = train_missing_autoencoder(
                dataset,
                hidden=hidden,
                decision_layers=config.model.decision_layers,
                d_emb=config.model.embed_dim,
                use_embedding=config.model.use_embedding,
                two_step=config.model.two_step,
                **common,
            )
    except TrainingError as exc:
        _save_failed_stage(paths, "ae", exc)
        raise

    paths.models.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "kwargs": _autoencoder_kwargs(model),
            "state": model.state_dict(),
            "trace": list(trace),
            "epochs": epochs,
            "schema_hash": dataset.schema.content_hash(),
        },
        paths.autoencoder,
    )
    return model, trace


def cmd_train(config: RunConfig, out_dir, resume: bool = False) -> Path:
    """Run both training stages and write the final model bundle."""
    config.validate()
    paths = RunPaths(out_dir)
    if not paths.train_npz.exists():
        raise ConfigError(f"no prepared dataset at {paths.train_npz}; run prepare first")
    dataset = load_dataset(paths.train_npz)

    model, ae_trace = _train_stage_one(config, dataset, paths, resume)

    thresholds = None
    if config.mode == "incomplete":
        thresholds = calibrate_thresholds(model, dataset)
        _write_json(paths.thresholds, thresholds.to_dict())

    snapshot = _latest_checkpoint(paths, "gan") if resume else None
    cb = _checkpoint_writer(paths, "gan", "gan")
    try:
        generator, critic, gan_trace = train_wgan(
            model,
            dataset,
            iterations=config.training.gan_iterations,
            critic_steps=config.training.critic_steps,
            batch_size=config.training.gan_batch,
            lr=config.training.gan_lr,
            lam=config.training.grad_penalty,
            depth=config.training.gan_depth,
            seed=stage_seed(config.seed, "gan"),
            resume=snapshot,
            checkpoint_every=config.training.checkpoint_every_iterations,
            checkpoint_cb=cb,
        )
    except TrainingError as exc:
        _save_failed_stage(paths, "gan", exc)
        raise

    _write_json(paths.traces, {"autoencoder": list(ae_trace), "gan": list(gan_trace)})
    summary = _read_json(paths.summary, "prepared summary")
    save_bundle(
        paths.bundle,
        schema=dataset.schema,
        mode=config.mode,
        autoencoder=model,
        generator=generator,
        critic=critic,
        thresholds=thresholds,
        provenance={
            "config": config.to_dict(),
            "config_hash": config.content_hash(),
            "seed": config.seed,
            "id_column": summary["id_column"],
            "time_column": summary["time_column"],
            "versions": {
                "package": __version__,
                "torch": torch.__version__,
                "numpy": np.__version__,
            },
        },
    )
    return paths.bundle


# ---------------------------------------------------------------------------
# generate


def _raw_defs(schema):
    return [f for f in schema.features if f.name != LENGTH_FEATURE]


def cmd_generate(
    config: RunConfig, out_dir, count: int | None = None, seed: int | None = None
) -> Path:
    """Sample synthetic instances and write them in the raw input format."""
    config.validate()
    paths = RunPaths(out_dir)
    loaded = load_bundle(paths.bundle)
    master = config.seed if seed is None else int(seed)

    if count is None:
        count = config.evaluation.count
    if count is None:
        summary = _read_json(paths.summary, "prepared summary")
        count = int(summary["train"]["instances"])
    if count < 0:
        raise ConfigError("count must be non-negative")

    dataset = generate_dataset(
        loaded.generator,
        loaded.autoencoder,
        loaded.schema,
        count,
        seed=stage_seed(master, "generate"),
        thresholds=loaded.thresholds,
    )
    records = [
        inverse_transform(inst, loaded.schema, key=f"g{i:06d}")
        for i, inst in enumerate(dataset.instances)
    ]
    paths.synthetic.mkdir(parents=True, exist_ok=True)
    write_delimited(
        records,
        _raw_defs(loaded.schema),
        paths.synthetic_csv,
        id_column=loaded.provenance.get("id_column", "id"),
        time_column=loaded.provenance.get("time_column", "time"),
    )
    _write_json(
        paths.manifest,
        {
            "count": count,
            "seed": master,
            "stage_seed": stage_seed(master, "generate"),
            "bundle_sha256": file_sha256(paths.bundle),
            "schema_hash": loaded.schema.content_hash(),
        },
    )
    return paths.synthetic_csv


# ---------------------------------------------------------------------------
# evaluate / report


def _load_synthetic(paths: RunPaths, schema) -> Dataset:
    if not paths.synthetic_csv.exists():
        raise ConfigError(f"no synthetic data at {paths.synthetic_csv}; run generate first")
    summary = _read_json(paths.summary, "prepared summary")
    records = read_delimited(
        paths.synthetic_csv,
        _raw_defs(schema),
        id_column=summary["id_column"],
        time_column=summary["time_column"],
    )
    if not records:
        raise DataError(f"synthetic table {paths.synthetic_csv} holds no instances")
    return Dataset(schema, [transform(r, schema) for r in records], split="synthetic")


def _grid_from_config(entries):
    if entries is None:
        return None
    specs = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise ConfigError(f"grid entries must be mappings, got {entry!r}")
        try:
            specs.append(DownstreamSpec(**entry))
        except TypeError as exc:
            raise ConfigError(f"bad grid entry {entry!r}: {exc}") from exc
    return specs


def cmd_evaluate(config: RunConfig, out_dir) -> list:
    """Score synthetic against real data and render the report files."""
    config.validate()
    paths = RunPaths(out_dir)
    if not paths.train_npz.exists():
        raise ConfigError(f"no prepared dataset at {paths.train_npz}; run prepare first")
    real_train = load_dataset(paths.train_npz)
    real_test = load_dataset(paths.test_npz) if paths.test_npz.exists() else None
    synthetic = _load_synthetic(paths, real_train.schema)

    ev = config.evaluation
    metrics = ev.metrics
    report = evaluate_pair(
        real_train,
        synthetic,
        real_test=real_test,
        mode=config.mode,
        seeds=ev.seeds,
        grid=_grid_from_config(ev.grid),
        label=ev.label,
        projection_sample=ev.projection_sample,
        include_discriminative=metrics is None or "discriminative" in metrics,
        include_predictive=metrics is None or "predictive" in metrics,
        discriminative_kwargs=ev.discriminative,
        predictive_kwargs=ev.predictive,
    )
    report.config["run"] = config.to_dict()
    return render_report(report, paths.report)


def cmd_report(config: RunConfig, out_dir) -> list:
    """Re-render tables and figures from a saved evaluation report."""
    paths = RunPaths(out_dir)
    payload = _read_json(paths.report / "report.json", "evaluation report")
    report = EvalReport.from_dict(payload)
    return render_report(report, paths.report)
