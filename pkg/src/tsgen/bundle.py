"""Model bundle persistence: everything generation needs in one file.

A bundle stores the fitted schema, the trained autoencoder, the latent
generator (and critic, for resumable inspection), and calibrated mask
thresholds when the run is incomplete-mode. Loading verifies that the
pieces still fit together: the schema hash must match what the networks
were trained against and the generator must emit vectors of the
autoencoder's latent dimension.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import BundleError
from .models import (
    LatentCritic,
    LatentGenerator,
    MaskThresholds,
    MissingSeriesAutoencoder,
    SeriesAutoencoder,
)
from .models.embedding import ObservationEmbedding
from .schema import SchemaDescriptor

BUNDLE_FORMAT = 1


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _autoencoder_kwargs(model) -> dict:
    if isinstance(model, MissingSeriesAutoencoder):
        use_embedding = isinstance(model.embed, ObservationEmbedding)
        return {
            "hidden": model.hidden,
            "layers": model.layers,
            "decision_layers": model.decision_layers,
            "d_emb": model.embed.width if use_embedding else None,
            "use_embedding": use_embedding,
            "two_step": model.two_step,
        }
    return {"hidden": model.hidden, "layers": model.layers}


def _generator_kwargs(gen: LatentGenerator) -> dict:
    linears = [m for m in gen.net if isinstance(m, nn.Linear)]
    depth = len(linears) - 1
    return {
        "latent_dim": gen.latent_dim,
        "depth": depth,
        "hidden": linears[0].out_features if depth > 0 else None,
    }


def _critic_kwargs(critic: LatentCritic) -> dict:
    first = critic.net[0]
    return {"latent_dim": first.in_features, "hidden": first.out_features}


def save_bundle(
    path,
    *,
    schema: SchemaDescriptor,
    mode: str,
    autoencoder,
    generator: LatentGenerator,
    critic: LatentCritic | None = None,
    thresholds: MaskThresholds | None = None,
    provenance: dict | None = None,
) -> Path:
    """Write a self-contained bundle; returns the path written."""
    if generator.latent_dim != autoencoder.latent_dim:
        raise BundleError(
            f"generator emits dim {generator.latent_dim}, "
            f"autoencoder expects {autoencoder.latent_dim}"
        )
    payload = {
        "format": BUNDLE_FORMAT,
        "mode": mode,
        "schema": schema.to_dict(),
        "schema_hash": schema.content_hash(),
        "autoencoder": {
            "kwargs": _autoencoder_kwargs(autoencoder),
            "state": autoencoder.state_dict(),
        },
        "generator": {
            "kwargs": _generator_kwargs(generator),
            "state": generator.state_dict(),
        },
        "critic": None
        if critic is None
        else {"kwargs": _critic_kwargs(critic), "state": critic.state_dict()},
        "thresholds": thresholds.to_dict() if thresholds is not None else None,
        "provenance": dict(provenance or {}),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


class LoadedBundle:
    """Deserialized bundle with verified, ready-to-run modules."""

    def __init__(self, schema, mode, autoencoder, generator, critic, thresholds, provenance):
        self.schema = schema
        self.mode = mode
        self.autoencoder = autoencoder
        self.generator = generator
        self.critic = critic
        self.thresholds = thresholds
        self.provenance = provenance


def _load_module(cls, entry, what, **extra):
    try:
        module = cls(**extra, **entry["kwargs"])
        module.load_state_dict(entry["state"])
    except (KeyError, RuntimeError, TypeError) as exc:
        raise BundleError(f"cannot restore {what}: {exc}") from exc
    module.eval()
    return module


def load_bundle(path) -> LoadedBundle:
    path = Path(path)
    if not path.exists():
        raise BundleError(f"bundle not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise BundleError(f"cannot read bundle {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != BUNDLE_FORMAT:
        raise BundleError(f"{path} is not a format-{BUNDLE_FORMAT} bundle")

    schema = SchemaDescriptor.from_dict(payload["schema"])
    if schema.content_hash() != payload["schema_hash"]:
        raise BundleError("bundle schema does not match its recorded hash")
    mode = payload["mode"]
    layout = schema.layout

    if mode == "incomplete":
        autoencoder = _load_module(
            MissingSeriesAutoencoder, payload["autoencoder"], "autoencoder", layout=layout
        )
    else:
        autoencoder = _load_module(
            SeriesAutoencoder, payload["autoencoder"], "autoencoder", layout=layout
        )
    generator = _load_module(LatentGenerator, payload["generator"], "generator")
    critic = None
    if payload.get("critic") is not None:
        critic = _load_module(LatentCritic, payload["critic"], "critic")

    if generator.latent_dim != autoencoder.latent_dim:
        raise BundleError(
            f"bundle generator dim {generator.latent_dim} does not match "
            f"autoencoder latent dim {autoencoder.latent_dim}"
        )

    thresholds = None
    if payload.get("thresholds") is not None:
        thresholds = MaskThresholds.from_dict(payload["thresholds"])
        if np.asarray(thresholds.dynamic).shape != (layout.K,):
            raise BundleError("bundle thresholds do not match the schema layout")

    return LoadedBundle(
        schema=schema,
        mode=mode,
        autoencoder=autoencoder,
        generator=generator,
        critic=critic,
        thresholds=thresholds,
        provenance=payload.get("provenance", {}),
    )
