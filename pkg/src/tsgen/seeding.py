"""Deterministic seed fan-out.

A single master seed drives every stage of a run. Stage seeds are derived
by fixed offsets so that reruns, resumes, and per-seed evaluation repeats
are reproducible and independent:

    stage_seed = master * 10_000 + STAGE_OFFSETS[stage] * 1_000 + index

`index` distinguishes repeats inside one stage (e.g. evaluation seed #3).
"""

from __future__ import annotations

import numpy as np
import torch

STAGE_OFFSETS = {
    "prepare": 0,
    "autoencoder": 1,
    "calibrate": 2,
    "gan": 3,
    "generate": 4,
    "evaluate": 5,
    "benchmark": 6,
}


def stage_seed(master: int, stage: str, index: int = 0) -> int:
    if stage not in STAGE_OFFSETS:
        raise KeyError(f"unknown stage {stage!r}")
    return master * 10_000 + STAGE_OFFSETS[stage] * 1_000 + index


def numpy_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def torch_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen
