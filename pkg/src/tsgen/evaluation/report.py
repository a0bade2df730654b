"""Report assembly: run the metric grid over seeds, render tables and figures."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from ..errors import ConfigError, EvalError
from ..seeding import numpy_rng
from .downstream import default_grid, run_downstream
from .patterns import (
    constant_missing_features,
    heatmap_agreement,
    missing_rate_vectors,
    pca_project,
    pearson_missing_heatmap,
)
from .scores import discriminative_score, predictive_score


@dataclass
class MetricSummary:
    """Mean plus population std over per-seed values."""

    mean: float
    std: float
    values: list

    @classmethod
    def over(cls, values):
        arr = np.asarray(list(values), dtype=np.float64)
        return cls(float(arr.mean()), float(arr.std()), [float(v) for v in arr])

    def to_dict(self):
        return {"mean": self.mean, "std": self.std, "values": self.values}


@dataclass
class EvalReport:
    """Everything one evaluation run produced, JSON-serializable."""

    mode: str
    seeds: list
    label: str | None = None
    discriminative: MetricSummary | None = None
    predictive: MetricSummary | None = None
    predictive_oracle: MetricSummary | None = None
    tstr: dict = field(default_factory=dict)
    tstr_average: MetricSummary | None = None
    trtr: dict = field(default_factory=dict)
    trtr_average: MetricSummary | None = None
    feature_names: list = field(default_factory=list)
    missing_rates_real: list | None = None
    missing_rates_synthetic: list | None = None
    heatmap_real: np.ndarray | None = None
    heatmap_synthetic: np.ndarray | None = None
    heatmap_agreement: float | None = None
    constant_missing: list = field(default_factory=list)
    projection_real: np.ndarray | None = None
    projection_synthetic: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self):
        def plain(v):
            if isinstance(v, MetricSummary):
                return v.to_dict()
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            return v

        return {k: plain(v) for k, v in self.__dict__.items()}

    def save(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        def summary(v):
            if v is None:
                return None
            return MetricSummary(v["mean"], v["std"], list(v["values"]))

        def array(v):
            return None if v is None else np.asarray(v, dtype=np.float64)

        return cls(
            mode=d["mode"],
            seeds=list(d["seeds"]),
            label=d.get("label"),
            discriminative=summary(d.get("discriminative")),
            predictive=summary(d.get("predictive")),
            predictive_oracle=summary(d.get("predictive_oracle")),
            tstr={k: summary(v) for k, v in (d.get("tstr") or {}).items()},
            tstr_average=summary(d.get("tstr_average")),
            trtr={k: summary(v) for k, v in (d.get("trtr") or {}).items()},
            trtr_average=summary(d.get("trtr_average")),
            feature_names=list(d.get("feature_names") or []),
            missing_rates_real=d.get("missing_rates_real"),
            missing_rates_synthetic=d.get("missing_rates_synthetic"),
            heatmap_real=array(d.get("heatmap_real")),
            heatmap_synthetic=array(d.get("heatmap_synthetic")),
            heatmap_agreement=d.get("heatmap_agreement"),
            constant_missing=list(d.get("constant_missing") or []),
            projection_real=array(d.get("projection_real")),
            projection_synthetic=array(d.get("projection_synthetic")),
            config=dict(d.get("config") or {}),
        )


def _flat_windows(dataset, sample, seed):
    """Sampled instances used when projecting complete data."""
    instances = dataset.instances
    if sample is not None and sample < len(instances):
        idx = np.sort(numpy_rng(seed).choice(len(instances), sample, replace=False))
        instances = [instances[i] for i in idx]
    return instances


def _projection_pair(real_vecs, synth_vecs):
    """Joint PCA so both sides share axes; returns the two coordinate blocks."""
    coords = pca_project(np.concatenate([real_vecs, synth_vecs], axis=0))
    return coords[: len(real_vecs)], coords[len(real_vecs) :]


def evaluate_pair(
    real_train,
    synthetic,
    *,
    real_test=None,
    mode=None,
    seeds=(0, 1, 2),
    grid=None,
    label=None,
    projection_sample=500,
    include_discriminative=True,
    include_predictive=True,
    include_oracle=True,
    discriminative_kwargs=None,
    predictive_kwargs=None,
) -> EvalReport:
    """Score a synthetic dataset against real data over a list of seeds.

    Complete mode runs the discriminative and predictive scores plus a
    train-on-real predictive oracle. Incomplete mode runs the downstream
    classifier grid in both train-on-real and train-on-synthetic
    orientations and adds missing-pattern diagnostics. `real_test` is the
    held-out side for utility metrics; it defaults to `real_train`.
    """
    if mode is None:
        mode = "complete" if real_train.schema.complete else "incomplete"
    if mode not in ("complete", "incomplete"):
        raise ConfigError(f"unknown evaluation mode {mode!r}")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("evaluation needs at least one seed")
    eval_real = real_test if real_test is not None else real_train
    disc_kwargs = dict(discriminative_kwargs or {})
    pred_kwargs = dict(predictive_kwargs or {})
    if mode == "complete" and grid is not None:
        raise ConfigError("the downstream classifier grid applies to incomplete mode")

    report = EvalReport(
        mode=mode,
        seeds=seeds,
        label=label,
        feature_names=[g.name for g in real_train.schema.layout.dynamic_groups],
        config={
            "seeds": seeds,
            "label": label,
            "projection_sample": projection_sample,
            "discriminative": disc_kwargs,
            "predictive": pred_kwargs,
        },
    )

    if include_discriminative:
        report.discriminative = MetricSummary.over(
            discriminative_score(real_train, synthetic, seed=s, **disc_kwargs)
            for s in seeds
        )

    if mode == "complete":
        if include_predictive:
            report.predictive = MetricSummary.over(
                predictive_score(synthetic, eval_real, seed=s, **pred_kwargs)
                for s in seeds
            )
        if include_predictive and include_oracle:
            report.predictive_oracle = MetricSummary.over(
                predictive_score(real_train, eval_real, seed=s, **pred_kwargs)
                for s in seeds
            )
        real_sample = _flat_windows(real_train, projection_sample, 0)
        synth_sample = _flat_windows(synthetic, projection_sample, 1)
        min_len = min(inst.length for inst in real_sample + synth_sample)
        real_flat = np.stack([i.X[:min_len].ravel() for i in real_sample])
        synth_flat = np.stack([i.X[:min_len].ravel() for i in synth_sample])
        report.projection_real, report.projection_synthetic = _projection_pair(
            real_flat, synth_flat
        )
        report.config["grid"] = []
        return report

    if label is None:
        raise ConfigError("incomplete-mode evaluation needs a label feature name")
    specs = list(grid) if grid is not None else default_grid()
    report.config["grid"] = [s.name for s in specs]
    tstr_rows, trtr_rows = {}, {}
    for spec in specs:
        tstr_rows[spec.name] = [
            run_downstream(synthetic, eval_real, spec, label=label, seed=s)
            for s in seeds
        ]
        trtr_rows[spec.name] = [
            run_downstream(real_train, eval_real, spec, label=label, seed=s)
            for s in seeds
        ]
    report.tstr = {k: MetricSummary.over(v) for k, v in tstr_rows.items()}
    report.trtr = {k: MetricSummary.over(v) for k, v in trtr_rows.items()}
    per_seed = np.stack([tstr_rows[s.name] for s in specs])
    report.tstr_average = MetricSummary.over(per_seed.mean(axis=0))
    per_seed = np.stack([trtr_rows[s.name] for s in specs])
    report.trtr_average = MetricSummary.over(per_seed.mean(axis=0))

    report.missing_rates_real = real_train.dynamic_missing_rates().tolist()
    report.missing_rates_synthetic = synthetic.dynamic_missing_rates().tolist()
    report.heatmap_real = pearson_missing_heatmap(real_train)
    report.heatmap_synthetic = pearson_missing_heatmap(synthetic)
    try:
        report.heatmap_agreement = heatmap_agreement(
            report.heatmap_real, report.heatmap_synthetic
        )
    except EvalError:
        report.heatmap_agreement = None
    report.constant_missing = sorted(
        set(constant_missing_features(real_train))
        | set(constant_missing_features(synthetic))
    )
    real_vecs = missing_rate_vectors(real_train, sample=projection_sample, seed=0)
    synth_vecs = missing_rate_vectors(synthetic, sample=projection_sample, seed=1)
    report.projection_real, report.projection_synthetic = _projection_pair(
        real_vecs, synth_vecs
    )
    return report


# ---------------------------------------------------------------------------
# rendering


def _heatmap_figure(matrix, names, title, path):
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    im = ax.imshow(np.asarray(matrix), vmin=-1.0, vmax=1.0, cmap="coolwarm")
    ax.set_xticks(range(len(names)))
    ax.set_yticks(range(len(names)))
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_yticklabels(names, fontsize=7)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _projection_figure(real_xy, synth_xy, path):
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    ax.scatter(real_xy[:, 0], real_xy[:, 1], s=12, alpha=0.5, label="real")
    ax.scatter(synth_xy[:, 0], synth_xy[:, 1], s=12, alpha=0.5, label="synthetic")
    ax.set_xlabel("PC 1")
    ax.set_ylabel("PC 2")
    ax.set_title("principal-component projection")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _rates_figure(names, real, synth, path):
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.5 * len(names)), 4.0))
    ax.bar(x - 0.2, real, width=0.4, label="real")
    ax.bar(x + 0.2, synth, width=0.4, label="synthetic")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_ylabel("missing rate")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(report: EvalReport, out_dir) -> list:
    """Write the report JSON plus CSV tables and figures; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [report.save(out / "report.json")]

    rows = []
    for name, summary in (
        ("discriminative", report.discriminative),
        ("predictive", report.predictive),
        ("predictive_oracle", report.predictive_oracle),
        ("tstr_average", report.tstr_average),
        ("trtr_average", report.trtr_average),
    ):
        if summary is not None:
            rows.append(
                {
                    "metric": name,
                    "mean": summary.mean,
                    "std": summary.std,
                    "values": " ".join(f"{v:.6f}" for v in summary.values),
                }
            )
    if rows:
        path = out / "metrics.csv"
        pd.DataFrame(rows).to_csv(path, index=False)
        written.append(path)

    if report.tstr:
        rows = []
        for name in report.tstr:
            kind, scaling = name.split("/", 1)
            entry = {"classifier": kind, "scaling": scaling}
            entry.update(
                trtr_mean=report.trtr[name].mean,
                trtr_std=report.trtr[name].std,
                tstr_mean=report.tstr[name].mean,
                tstr_std=report.tstr[name].std,
            )
            rows.append(entry)
        path = out / "downstream.csv"
        pd.DataFrame(rows).to_csv(path, index=False)
        written.append(path)

    if report.missing_rates_real is not None:
        path = out / "missing_rates.csv"
        pd.DataFrame(
            {
                "feature": report.feature_names,
                "real": report.missing_rates_real,
                "synthetic": report.missing_rates_synthetic,
            }
        ).to_csv(path, index=False)
        written.append(path)
        fig_path = out / "missing_rates.png"
        _rates_figure(
            report.feature_names,
            report.missing_rates_real,
            report.missing_rates_synthetic,
            fig_path,
        )
        written.append(fig_path)

    for side in ("real", "synthetic"):
        matrix = getattr(report, f"heatmap_{side}")
        if matrix is None:
            continue
        path = out / f"heatmap_{side}.csv"
        pd.DataFrame(
            np.asarray(matrix), index=report.feature_names, columns=report.feature_names
        ).to_csv(path)
        written.append(path)
        fig_path = out / f"heatmap_{side}.png"
        _heatmap_figure(
            matrix, report.feature_names, f"missing-rate correlation ({side})", fig_path
        )
        written.append(fig_path)

    if report.projection_real is not None:
        real_xy = np.asarray(report.projection_real)
        synth_xy = np.asarray(report.projection_synthetic)
        frame = pd.DataFrame(
            {
                "side": ["real"] * len(real_xy) + ["synthetic"] * len(synth_xy),
                "pc1": np.concatenate([real_xy[:, 0], synth_xy[:, 0]]),
                "pc2": np.concatenate([real_xy[:, 1], synth_xy[:, 1]]),
            }
        )
        path = out / "projection.csv"
        frame.to_csv(path, index=False)
        written.append(path)
        fig_path = out / "projection.png"
        _projection_figure(real_xy, synth_xy, fig_path)
        written.append(fig_path)

    return written
