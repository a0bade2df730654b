"""Run configuration: one structured file drives every pipeline command.

Defaults follow the reference recipes: complete mode trains the
autoencoder for 1000 epochs at batch 512 with hidden size 4 * d_x and
scheduled sampling; incomplete mode trains for 800 epochs at batch 128
with hidden size 128 and teacher forcing; the adversarial stage always
runs 15000 iterations at batch 512 with 5 critic steps per generator
step and penalty weight 10. Field names carry their units (epochs,
iterations) so time-like values are unambiguous.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

MODES = ("complete", "incomplete")


def _require_keys(section, allowed, where):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass
class DataConfig:
    """Where the raw inputs live and how to window them."""

    schema_spec: str | None = None
    train_path: str | None = None
    test_path: str | None = None
    window: int | None = None  # overlapping-window length, complete mode only

    def validate(self, mode):
        if self.window is not None:
            if mode != "complete":
                raise ConfigError("window extraction applies to complete mode only")
            if self.window < 1:
                raise ConfigError("window must be at least 1 step")


@dataclass
class ModelConfig:
    """Network sizes shared by both autoencoder variants."""

    layers: int = 3
    hidden: int | None = None  # complete mode defaults to hidden_multiplier * d_x
    hidden_multiplier: int = 4
    decision_layers: int = 2
    embed_dim: int | None = None
    use_embedding: bool = True
    two_step: bool = True

    def validate(self, mode):
        if self.layers < 1:
            raise ConfigError("layers must be at least 1")
        if mode == "incomplete" and self.two_step:
            if not 1 <= self.decision_layers < self.layers:
                raise ConfigError(
                    "incomplete mode needs 1 <= decision_layers < layers"
                )

    def resolve_hidden(self, mode, d_x):
        if self.hidden is not None:
            return self.hidden
        return self.hidden_multiplier * d_x if mode == "complete" else 128


@dataclass
class TrainingConfig:
    """Optimization constants for both stages."""

    ae_epochs: int | None = None  # 1000 complete / 800 incomplete
    ae_batch: int | None = None  # 512 complete / 128 incomplete
    ae_lr: float = 1e-3
    sampling_p: float | None = None  # 0.5 complete / teacher forcing incomplete
    gan_iterations: int = 15000
    gan_batch: int = 512
    gan_lr: float = 1e-4
    critic_steps: int = 5
    grad_penalty: float = 10.0
    gan_depth: int = 3
    checkpoint_every_epochs: int = 100
    checkpoint_every_iterations: int = 1000

    def validate(self, mode):
        for name in ("ae_epochs", "ae_batch"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be positive")
        if self.gan_iterations < 0 or self.critic_steps < 1:
            raise ConfigError("bad adversarial-stage constants")
        p = self.sampling_p
        if p is not None and not 0.0 <= p <= 1.0:
            raise ConfigError("sampling_p must lie in [0, 1]")

    def resolve(self, mode):
        """Fill mode-dependent defaults; returns (epochs, batch, sampling_p)."""
        epochs = self.ae_epochs if self.ae_epochs is not None else (
            1000 if mode == "complete" else 800
        )
        batch = self.ae_batch if self.ae_batch is not None else (
            512 if mode == "complete" else 128
        )
        sampling = self.sampling_p if self.sampling_p is not None else (
            0.5 if mode == "complete" else 1.0
        )
        return epochs, batch, sampling


@dataclass
class EvalConfig:
    """Metric grid, seed list, and generation size."""

    seeds: list = field(default_factory=lambda: [0, 1, 2])
    metrics: list | None = None  # complete mode: subset of the two scores
    grid: list | None = None  # incomplete mode: [{kind, scaling, ...}, ...]
    label: str | None = None
    count: int | None = None  # synthetic instances to generate; default len(train)
    projection_sample: int = 500
    discriminative: dict = field(default_factory=dict)
    predictive: dict = field(default_factory=dict)

    def validate(self, mode):
        if not self.seeds:
            raise ConfigError("evaluation needs at least one seed")
        if self.metrics is not None:
            allowed = {"discriminative", "predictive"}
            unknown = set(self.metrics) - allowed
            if unknown:
                raise ConfigError(f"unknown metrics: {sorted(unknown)}")
            if mode == "incomplete" and "predictive" in self.metrics:
                raise ConfigError(
                    "the predictive score is defined for complete data only"
                )
        if self.grid is not None and mode == "complete":
            raise ConfigError("the downstream grid applies to incomplete mode")
        if mode == "incomplete" and self.label is None:
            raise ConfigError("incomplete mode needs evaluation.label")
        if self.count is not None and self.count < 0:
            raise ConfigError("count must be non-negative")


@dataclass
class RunConfig:
    """Everything one end-to-end run needs, resolvable from a YAML file."""

    mode: str = "complete"
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.data.validate(self.mode)
        self.model.validate(self.mode)
        self.training.validate(self.mode)
        self.evaluation.validate(self.mode)
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


_SECTIONS = {
    "data": DataConfig,
    "model": ModelConfig,
    "training": TrainingConfig,
    "evaluation": EvalConfig,
}


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a mapping")
    _require_keys(doc, {"mode", "seed", *_SECTIONS}, "config")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        fields = {f for f in cls.__dataclass_fields__}
        _require_keys(section, fields, name)
        try:
            kwargs[name] = cls(**section)
        except TypeError as exc:
            raise ConfigError(f"bad {name} section: {exc}") from exc
    cfg = RunConfig(
        mode=doc.get("mode", "complete"),
        seed=int(doc.get("seed", 0)),
        **kwargs,
    )
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(doc)
