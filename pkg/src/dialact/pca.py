"""Principal component analysis on plain arrays (no gradients needed)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankError, ShapeError

_ZERO_VARIANCE_TOL = 1e-12


@dataclass
class PcaProjection:
    mean: np.ndarray            # (d,)
    components: np.ndarray      # (k, d), orthonormal rows
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]


def pca_fit(samples, k: int) -> PcaProjection:
    """Top-k components by explained variance from centered SVD.

    Raises RankError when k exceeds min(n, d) or the data has no variance.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"samples must be 2-D, got ndim={X.ndim}")
    n, d = X.shape
    if n < 2:
        raise RankError(f"need at least 2 samples, got {n}")
    if not 1 <= k <= min(n, d):
        raise RankError(f"k={k} outside [1, min(n={n}, d={d})]")
    mean = X.mean(axis=0)
    centered = X - mean
    total_variance = float((centered ** 2).sum()) / (n - 1)
    if total_variance < _ZERO_VARIANCE_TOL:
        raise RankError("data has zero variance; no principal directions exist")
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    # Deterministic sign: make each component's largest-magnitude entry positive.
    for i in range(vt.shape[0]):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0:
            vt[i] = -vt[i]
    variances = singular ** 2 / (n - 1)
    return PcaProjection(
        mean=mean,
        components=vt[:k].copy(),
        explained_variance=variances[:k].copy(),
        explained_variance_ratio=(variances[:k] / variances.sum()).copy(),
    )


def pca_project(projection: PcaProjection, vectors) -> np.ndarray:
    """Center then project; accepts a single vector or a (m, d) batch."""
    V = np.asarray(vectors, dtype=np.float64)
    single = V.ndim == 1
    if single:
        V = V.reshape(1, -1)
    if V.shape[1] != projection.mean.shape[0]:
        raise ShapeError(f"vectors have width {V.shape[1]}, projection expects {projection.mean.shape[0]}")
    out = (V - projection.mean) @ projection.components.T
    return out[0] if single else out


def pca_reconstruct(projection: PcaProjection, projected) -> np.ndarray:
    Z = np.asarray(projected, dtype=np.float64)
    single = Z.ndim == 1
    if single:
        Z = Z.reshape(1, -1)
    out = Z @ projection.components + projection.mean
    return out[0] if single else out
