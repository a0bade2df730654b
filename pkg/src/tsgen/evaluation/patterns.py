"""Missing-pattern diagnostics: rate vectors, Pearson heatmaps, projections."""

import numpy as np

from ..errors import EvalError
from ..seeding import numpy_rng


def missing_rate_vectors(dataset, sample=None, seed=0) -> np.ndarray:
    """Per-instance fraction of missing steps for each dynamic feature, (n, K).

    With `sample` set, at most that many instances are drawn without
    replacement using the seed.
    """
    rows = np.stack(
        [1.0 - inst.M_x.mean(axis=0, dtype=np.float64) for inst in dataset.instances]
    )
    if sample is not None and sample < rows.shape[0]:
        idx = numpy_rng(seed).choice(rows.shape[0], size=sample, replace=False)
        rows = rows[np.sort(idx)]
    return rows


def pca_project(vectors, dims=2) -> np.ndarray:
    """Centered principal-component projection, deterministic up to a fixed sign.

    Each component is oriented so its largest-magnitude loading is positive.
    Zero-variance directions (and missing ranks) produce zero coordinates.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2:
        raise EvalError("projection expects a 2-d array of vectors")
    if v.shape[0] < dims:
        raise EvalError(f"projection to {dims} dims needs at least {dims} vectors")
    centered = v - v.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    coords = np.zeros((v.shape[0], dims), dtype=np.float64)
    for k in range(min(dims, vt.shape[0])):
        if s[k] <= 1e-12 * max(s[0], 1e-300):
            break
        comp = vt[k]
        if comp[np.argmax(np.abs(comp))] < 0:
            comp = -comp
        coords[:, k] = centered @ comp
    return coords


def pearson_matrix(rows) -> np.ndarray:
    """Pairwise Pearson correlation of columns; constant columns yield 0."""
    rows = np.asarray(rows, dtype=np.float64)
    centered = rows - rows.mean(axis=0)
    sd = np.sqrt((centered**2).mean(axis=0))
    good = sd > 0
    denom = np.where(good, sd, 1.0)
    corr = (centered.T @ centered) / rows.shape[0] / np.outer(denom, denom)
    corr[~good, :] = 0.0
    corr[:, ~good] = 0.0
    corr[np.ix_(good, good)] = np.clip(corr[np.ix_(good, good)], -1.0, 1.0)
    idx = np.where(good)[0]
    corr[idx, idx] = 1.0
    return corr


def pearson_missing_heatmap(dataset, sample=None, seed=0) -> np.ndarray:
    """K x K Pearson correlation of per-instance missing rates."""
    rows = missing_rate_vectors(dataset, sample=sample, seed=seed)
    if rows.shape[0] < 2:
        raise EvalError("missing-rate correlation needs at least 2 instances")
    return pearson_matrix(rows)


def constant_missing_features(dataset) -> list[str]:
    """Names of dynamic features whose per-instance missing rate never varies."""
    rows = missing_rate_vectors(dataset)
    sd = rows.std(axis=0)
    groups = dataset.schema.layout.dynamic_groups
    return [groups[j].name for j in range(rows.shape[1]) if sd[j] == 0]


def heatmap_agreement(a, b) -> float:
    """Pearson correlation between the upper triangles of two square matrices.

    Measures how well one missing-rate correlation structure matches
    another; 1 means identical pairwise structure.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise EvalError("heatmap agreement expects two square matrices of equal size")
    iu = np.triu_indices(a.shape[0], k=1)
    x, y = a[iu], b[iu]
    if x.size < 2 or x.std() == 0 or y.std() == 0:
        raise EvalError("heatmap agreement is undefined for degenerate triangles")
    x = x - x.mean()
    y = y - y.mean()
    return float((x * y).sum() / np.sqrt((x**2).sum() * (y**2).sum()))
