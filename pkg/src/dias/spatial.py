"""Inter- and intra-modality distance matrices and their consistency penalties."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import torch
from torch import Tensor

from .core import GlobalEmbedding, as_tensor, cosine_matrix


class ResidualKind(str, Enum):
    INTER = "inter"
    INTRA = "intra"


@dataclass(frozen=True)
class InterModalDistanceMatrix:
    values: Tensor


@dataclass(frozen=True)
class IntraModalDistanceMatrix:
    image_values: Tensor
    text_values: Tensor


@dataclass(frozen=True)
class SpatialResidualMatrix:
    kind: ResidualKind
    values: Tensor
    # signed difference; its square equals values**2 but stays smooth at 0
    signed: Tensor

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _stack(globals_: Sequence[GlobalEmbedding]) -> Tensor:
    return torch.stack([as_tensor(g.vector) for g in globals_])


def inter_distance(images, texts) -> InterModalDistanceMatrix:
    """Cosine distance 1 - cos(V_i, T_j) for all i, j.

    Accepts lists of GlobalEmbedding or (N, d) tensors.
    """
    v = _stack(images) if isinstance(images, (list, tuple)) else as_tensor(images)
    t = _stack(texts) if isinstance(texts, (list, tuple)) else as_tensor(texts)
    if v.shape[0] != t.shape[0]:
        raise ValueError(f"got {v.shape[0]} images but {t.shape[0]} texts")
    return InterModalDistanceMatrix(1.0 - cosine_matrix(v, t))


def _self_distance(x: Tensor) -> Tensor:
    d = 1.0 - cosine_matrix(x, x)
    d = 0.5 * (d + d.T)
    off = 1.0 - torch.eye(x.shape[0], dtype=d.dtype)
    return d * off


def intra_distance(images, texts) -> IntraModalDistanceMatrix:
    """Within-modality cosine distances; exactly symmetric with a zero diagonal."""
    v = _stack(images) if isinstance(images, (list, tuple)) else as_tensor(images)
    t = _stack(texts) if isinstance(texts, (list, tuple)) else as_tensor(texts)
    if v.shape[0] != t.shape[0]:
        raise ValueError(f"got {v.shape[0]} images but {t.shape[0]} texts")
    return IntraModalDistanceMatrix(_self_distance(v), _self_distance(t))


def inter_residual(X) -> SpatialResidualMatrix:
    x = X.values if isinstance(X, InterModalDistanceMatrix) else as_tensor(X)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError("inter residual needs a square matrix")
    diff = x - x.T
    return SpatialResidualMatrix(ResidualKind.INTER, diff.abs(), diff)


def intra_residual(Y, Z=None) -> SpatialResidualMatrix:
    if isinstance(Y, IntraModalDistanceMatrix):
        y, z = Y.image_values, Y.text_values
    else:
        y, z = as_tensor(Y), as_tensor(Z)
    if y.shape != z.shape or y.ndim != 2 or y.shape[0] != y.shape[1]:
        raise ValueError("intra residual needs two square matrices of equal shape")
    diff = y - z
    return SpatialResidualMatrix(ResidualKind.INTRA, diff.abs(), diff)


def residual(first, second=None) -> SpatialResidualMatrix:
    """|X - X^T| for one matrix, |Y - Z| for two."""
    if second is None and not isinstance(first, IntraModalDistanceMatrix):
        return inter_residual(first)
    return intra_residual(first, second)


def dense_loss(res: SpatialResidualMatrix, mask=None, normalize: bool = False) -> Tensor:
    """Sum of (optionally masked) squared residuals; ``normalize`` divides by N^2."""
    sq = res.signed.square()
    if mask is not None:
        m = mask if isinstance(mask, Tensor) else as_tensor(getattr(mask, "values", mask))
        if m.shape != sq.shape:
            raise ValueError(f"mask shape {tuple(m.shape)} != residual shape {tuple(sq.shape)}")
        sq = sq * m
    total = sq.sum()
    if normalize:
        total = total / sq.shape[0] ** 2
    return total


def distance_histogram(values, bins: int) -> list[tuple[float, float, int]]:
    """Equal-width histogram over [min, max] as (bin_start, bin_end, count) rows."""
    if bins < 1:
        raise ValueError("bins must be positive")
    vals = np.asarray(values, dtype=np.float64).ravel()
    if vals.size == 0:
        return []
    if not np.isfinite(vals).all():
        raise ValueError("histogram values must be finite")
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        counts = np.zeros(bins, dtype=int)
        counts[0] = vals.size
        edges = np.full(bins + 1, lo)
    else:
        counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]
