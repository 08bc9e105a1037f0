"""Local region/word interaction and pooling into global embeddings.

Each query row is replaced by a convex combination of the context rows,
weighted by clamped cosine similarity. For a pair (image a, text b) the
image global is pooled from the image regions attended over the words of
b, and the text global from the words attended over the regions of a, so
global embeddings are pair-dependent.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .core import (
    EPS,
    GlobalEmbedding,
    LocalBatch,
    LocalEmbeddingSet,
    Modality,
    as_tensor,
    cosine_matrix,
    l2_normalize,
)


@dataclass(frozen=True)
class AttentionRecord:
    source_modality: Modality
    similarity: Tensor
    updated_vectors: Tensor


def _attend(query: Tensor, context: Tensor) -> tuple[Tensor, Tensor]:
    s = cosine_matrix(query, context).clamp_min(0.0)
    updated = (s @ context) / (s.sum(-1, keepdim=True) + EPS)
    return s, updated


def aggregate_local(query: LocalEmbeddingSet, context: LocalEmbeddingSet) -> AttentionRecord:
    if query.dim != context.dim:
        raise ValueError(f"dimension mismatch: {query.dim} vs {context.dim}")
    s, updated = _attend(query.vectors, context.vectors)
    return AttentionRecord(query.modality, s, updated)


def pool(updated, instance_id: int = 0, modality: Modality = Modality.IMAGE) -> GlobalEmbedding:
    updated = as_tensor(updated)
    if updated.ndim != 2 or updated.shape[0] < 1:
        raise ValueError("pool needs at least one row")
    return GlobalEmbedding(instance_id, Modality(modality), l2_normalize(updated.mean(0)))


def _local_similarity(images: LocalBatch, texts: LocalBatch) -> Tensor:
    """Clamped cosine of every region with every word, shape (A, n, B, m); padding is zero."""
    A, n, d = images.vectors.shape
    B, m, _ = texts.vectors.shape
    q = l2_normalize(images.vectors).reshape(A * n, d)
    c = l2_normalize(texts.vectors).reshape(B * m, d)
    s = (q @ c.T).reshape(A, n, B, m).clamp_min(0.0)
    return s * images.mask[:, :, None, None] * texts.mask[None, None, :, :]


def _pooled(weights: Tensor, count: Tensor, context: Tensor) -> Tensor:
    """Mean over query rows of the attended context, normalised.

    weights: (Q, q, C, c) with padded query rows zeroed; count: (Q,) valid
    query rows; context: (C, c, d). Returns (Q, C, d).
    """
    w = weights.sum(1) / count[:, None, None]                    # (Q, C, c)
    pooled = torch.bmm(w.transpose(0, 1), context)               # (C, Q, d)
    return l2_normalize(pooled.transpose(0, 1))


def pair_globals(images: LocalBatch, texts: LocalBatch) -> tuple[Tensor, Tensor]:
    """Image and text globals for every (image a, text b) pair, both (A, B, d).

    v_hat[a, b] pools the regions of a after each attends over the words of
    b; t_hat[a, b] pools the words of b after attending over the regions of a.
    """
    s = _local_similarity(images, texts)
    n_img = images.mask.sum(1).to(s.dtype)
    n_txt = texts.mask.sum(1).to(s.dtype)
    w_img = s / (s.sum(3, keepdim=True) + EPS)                   # normalise over words
    v_hat = _pooled(w_img, n_img, texts.vectors)
    w_txt = s / (s.sum(1, keepdim=True) + EPS)                   # normalise over regions
    w_txt = w_txt.permute(2, 3, 0, 1)                            # (B, m, A, n)
    t_hat = _pooled(w_txt, n_txt, images.vectors).transpose(0, 1)
    return v_hat, t_hat


def similarity_matrix(images: LocalBatch, texts: LocalBatch, chunk: int | None = None) -> Tensor:
    """Global cosine similarity S[a, b] for all image/text pairs.

    ``chunk`` bounds the number of images processed at once; memory grows
    as chunk * len(texts) * n_max * d.
    """
    if chunk is None or chunk >= len(images):
        v_hat, t_hat = pair_globals(images, texts)
        return _cos(v_hat, t_hat)
    rows = []
    for start in range(0, len(images), chunk):
        part = images.index(range(start, min(start + chunk, len(images))))
        v_hat, t_hat = pair_globals(part, texts)
        rows.append(_cos(v_hat, t_hat))
    return torch.cat(rows, 0)


def _cos(u: Tensor, v: Tensor) -> Tensor:
    return (u * v).sum(-1) / ((u.norm(dim=-1) + EPS) * (v.norm(dim=-1) + EPS))
