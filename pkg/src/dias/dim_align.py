"""Dimension information alignment.

The i-th dimension vector of a modality collects coordinate i of every
paired sample in the batch. Correlating image dimension i with text
dimension j gives a d x d matrix; the regulariser rewards mass on its
diagonal (same-column correspondence) and penalises the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import torch
from torch import Tensor

from .core import DTYPE, EPS, LocalBatch, LocalEmbeddingSet, as_tensor


class BankMode(str, Enum):
    PAIRED_INSTANCE = "paired-instance"
    RESAMPLE = "resample"


class DimLossVariant(str, Enum):
    NAIVE = "naive"
    NORMALIZED = "normalized"
    NORMALIZED_ABS = "normalized-abs"


@dataclass(frozen=True)
class DimensionVectorBank:
    image_dim_vectors: Tensor   # (d, N_s)
    text_dim_vectors: Tensor    # (d, N_s)

    def __post_init__(self):
        if self.image_dim_vectors.shape != self.text_dim_vectors.shape:
            raise ValueError("image and text banks must have the same shape")
        if self.image_dim_vectors.shape[1] < 2:
            raise ValueError("need at least 2 paired samples to correlate dimensions")

    @property
    def num_samples(self) -> int:
        return self.image_dim_vectors.shape[1]


@dataclass(frozen=True)
class CorrelationMatrix:
    values: Tensor
    zero_variance_image: tuple[int, ...] = field(default=())
    zero_variance_text: tuple[int, ...] = field(default=())


def _resample(batch: LocalBatch, k: int, rng: np.random.Generator) -> Tensor:
    counts = batch.mask.sum(1).tolist()
    idx = np.stack([rng.integers(0, c, size=k) for c in counts])      # (B, k)
    rows = torch.arange(len(batch))[:, None]
    picked = batch.vectors[rows, torch.as_tensor(idx)]                  # (B, k, d)
    return picked.reshape(-1, picked.shape[-1])


def bank_from_batches(images: LocalBatch, texts: LocalBatch,
                      mode: BankMode | str = BankMode.PAIRED_INSTANCE,
                      k: int = 4, rng: np.random.Generator | None = None) -> DimensionVectorBank:
    """Dimension vectors from index-aligned padded batches of matched pairs."""
    if len(images) != len(texts):
        raise ValueError("image and text batches must be index-aligned pairs")
    if len(images) < 2:
        raise ValueError("need at least 2 pairs to build a dimension bank")
    mode = BankMode(mode)
    if mode is BankMode.PAIRED_INSTANCE:
        img, txt = images.mean(), texts.mean()
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        img, txt = _resample(images, k, rng), _resample(texts, k, rng)
    return DimensionVectorBank(img.T, txt.T)


def build_dimension_bank(images: Sequence[LocalEmbeddingSet], texts: Sequence[LocalEmbeddingSet],
                         mode: BankMode | str = BankMode.PAIRED_INSTANCE, k: int = 4,
                         rng: np.random.Generator | None = None) -> DimensionVectorBank:
    if len(images) != len(texts):
        raise ValueError("images and texts must be index-aligned pairs")
    if len(images) < 2:
        raise ValueError("need at least 2 pairs to build a dimension bank")
    return bank_from_batches(LocalBatch.from_sets(images), LocalBatch.from_sets(texts), mode, k, rng)


def correlation_matrix(bank: DimensionVectorBank) -> CorrelationMatrix:
    """Pearson correlation of every image dimension row with every text dimension row."""
    a = bank.image_dim_vectors - bank.image_dim_vectors.mean(1, keepdim=True)
    b = bank.text_dim_vectors - bank.text_dim_vectors.mean(1, keepdim=True)
    na, nb = a.norm(dim=1), b.norm(dim=1)
    c = (a @ b.T) / ((na[:, None] + EPS) * (nb[None, :] + EPS))
    with torch.no_grad():
        za = tuple(torch.nonzero(na == 0).flatten().tolist())
        zb = tuple(torch.nonzero(nb == 0).flatten().tolist())
    return CorrelationMatrix(c, za, zb)


def dim_align_loss(C, variant: DimLossVariant | str = DimLossVariant.NORMALIZED) -> Tensor:
    """Alignment regulariser on a correlation matrix (lower is better aligned).

    naive: -trace(C) + sum of off-diagonal entries.
    normalized: -sum_i (c_ii / sum_j |c_ij| + c_ii / sum_j |c_ji|); bounded
    below by -2d and invariant to positive rescaling of C.
    normalized-abs: as normalized with |c_ii| on top. Anti-correlated
    dimensions then count as aligned, which flips cosine similarities.
    """
    c = C.values if isinstance(C, CorrelationMatrix) else as_tensor(C)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("correlation matrix must be square")
    diag = torch.diagonal(c)
    variant = DimLossVariant(variant)
    if variant is DimLossVariant.NAIVE:
        return -2.0 * diag.sum() + c.sum()
    ac = c.abs()
    ad = diag.abs() if variant is DimLossVariant.NORMALIZED_ABS else diag
    row = ac.sum(1).clamp_min(EPS)
    col = ac.sum(0).clamp_min(EPS)
    return -(ad / row + ad / col).sum()


def identity_correlation(d: int) -> CorrelationMatrix:
    return CorrelationMatrix(torch.eye(d, dtype=DTYPE))
