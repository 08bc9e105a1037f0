"""Triplet ranking loss, negative mining and the combined training objective."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import torch
from torch import Tensor

from .core import GlobalEmbedding, LocalBatch, as_tensor, cosine, cosine_matrix
from .dim_align import BankMode, DimLossVariant, bank_from_batches, correlation_matrix, dim_align_loss
from .interaction import pair_globals
from .sparse import ThresholdSpace, hard_mask, smooth_mask, thresholds_for, topk_mask
from .spatial import (
    SpatialResidualMatrix,
    dense_loss,
    inter_residual,
    intra_distance,
    intra_residual,
)


class Sparsifier(str, Enum):
    THRESHOLD = "threshold"     # learnable soft thresholds (default)
    NONE = "none"               # dense penalties
    TOPK = "topk"
    L1 = "l1"


@dataclass
class LossWeights:
    margin_alpha: float = 0.2
    w_dim: float = 10.0
    w_inter: float = 0.05
    w_intra: float = 0.1

    def __post_init__(self):
        for name in ("margin_alpha", "w_dim", "w_inter", "w_intra"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class ObjectiveConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    sparsifier: Sparsifier = Sparsifier.THRESHOLD
    threshold_space: ThresholdSpace = ThresholdSpace.MAGNITUDE
    temperature: float = 0.1
    dim_variant: DimLossVariant = DimLossVariant.NORMALIZED
    dim_bank_mode: BankMode = BankMode.PAIRED_INSTANCE
    dim_resample_k: int = 4
    topk: int = 8
    l1_lambda: float = 0.1

    def __post_init__(self):
        self.sparsifier = Sparsifier(self.sparsifier)
        self.threshold_space = ThresholdSpace(self.threshold_space)
        self.dim_variant = DimLossVariant(self.dim_variant)
        self.dim_bank_mode = BankMode(self.dim_bank_mode)
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)


def triplet_loss(anchor_img, pos_text, neg_text, neg_img, alpha: float = 0.2) -> Tensor:
    """Bidirectional hinge: [a - s(V,T) + s(V,T-)]+ + [a - s(V,T) + s(V-,T)]+."""
    vec = lambda g: g.vector if isinstance(g, GlobalEmbedding) else as_tensor(g)
    v, t, tn, vn = map(vec, (anchor_img, pos_text, neg_text, neg_img))
    pos = cosine(v, t)
    return (alpha - pos + cosine(v, tn)).clamp_min(0.0) + (alpha - pos + cosine(vn, t)).clamp_min(0.0)


def batch_triplet_loss(S: Tensor, neg_text: Tensor, neg_img: Tensor, alpha: float) -> Tensor:
    """Mean over anchors of the bidirectional hinge on a pair-similarity matrix.

    S[a, b] is the similarity of image a with text b; row i is matched to
    column i. ``neg_text[i]`` / ``neg_img[i]`` are the mined negatives.
    """
    n = S.shape[0]
    idx = torch.arange(n)
    pos = S[idx, idx]
    i2t = (alpha - pos + S[idx, neg_text]).clamp_min(0.0)
    t2i = (alpha - pos + S[neg_img, idx]).clamp_min(0.0)
    return (i2t + t2i).mean()


def distance_weighted_choice(dist: np.ndarray, dim: int, rng: np.random.Generator,
                             clip: float = 100.0, cutoff: float = 0.0) -> np.ndarray:
    """Draw one negative per row, with probability proportional to inverse density.

    ``dist`` is an (N, N) matrix of unit-sphere Euclidean distances; the
    diagonal (the anchor itself) is never drawn. The density of pairwise
    distances on the d-sphere is q(t) ~ t^(d-2) (1 - t^2/4)^((d-3)/2);
    weights are min(sum(q) / q_j, clip) so near-uniform draws result when
    all candidates are equidistant.
    """
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    if n < 2:
        raise ValueError("negative mining needs at least 2 pairs")
    t = np.clip(dist, cutoff, 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_q = (dim - 2) * np.log(t) + 0.5 * (dim - 3) * np.log(np.clip(1.0 - 0.25 * t * t, 0.0, None))
    log_q = np.where(np.isnan(log_q), -np.inf, log_q)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        cand = np.array([j for j in range(n) if j != i])
        lq = log_q[i, cand]
        if np.all(np.isneginf(lq)):
            w = np.ones(len(cand))
        else:
            top = lq[np.isfinite(lq)].max()
            log_total = top + math.log(np.exp(lq[np.isfinite(lq)] - top).sum())
            with np.errstate(over="ignore"):
                w = np.minimum(np.exp(log_total - lq), clip)
        out[i] = cand[rng.choice(len(cand), p=w / w.sum())]
    return out


def mine_negatives(images, texts, seed: int | np.random.Generator = 0,
                   clip: float = 100.0) -> tuple[np.ndarray, np.ndarray]:
    """Distance-weighted negatives for each image anchor (a text) and each text anchor (an image).

    ``images``/``texts`` are matched global embeddings (lists or (N, d)
    tensors), or pass a similarity matrix via :func:`mine_from_similarity`.
    """
    stack = lambda xs: (torch.stack([as_tensor(g.vector) for g in xs])
                        if isinstance(xs, (list, tuple)) else as_tensor(xs))
    with torch.no_grad():
        S = cosine_matrix(stack(images), stack(texts))
    return mine_from_similarity(S, stack(images).shape[1], seed, clip)


def mine_from_similarity(S: Tensor, dim: int, seed: int | np.random.Generator = 0,
                         clip: float = 100.0) -> tuple[np.ndarray, np.ndarray]:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s = S.detach().cpu().numpy() if isinstance(S, Tensor) else np.asarray(S)
    if s.shape[0] < 2:
        raise ValueError("negative mining needs at least 2 pairs")
    dist = np.sqrt(np.clip(2.0 - 2.0 * s, 0.0, None))
    neg_text = distance_weighted_choice(dist, dim, rng, clip)
    neg_img = distance_weighted_choice(dist.T, dim, rng, clip)
    return neg_text, neg_img


@dataclass
class LossBreakdown:
    total: Tensor
    loc: Tensor
    dim: Tensor
    inter: Tensor
    intra: Tensor
    mask_density_inter: float
    mask_density_intra: float
    similarity: Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            "loss_total": self.total.item(),
            "loss_loc": self.loc.item(),
            "loss_dim": self.dim.item(),
            "loss_inter": self.inter.item(),
            "loss_intra": self.intra.item(),
            "mask_density_inter": self.mask_density_inter,
            "mask_density_intra": self.mask_density_intra,
        }


def spatial_term(res: SpatialResidualMatrix, beta_row, beta_col,
                 cfg: ObjectiveConfig) -> tuple[Tensor, float]:
    """Normalised (optionally sparsified) penalty and the hard-mask density."""
    kind = cfg.sparsifier
    if kind is Sparsifier.NONE:
        return dense_loss(res, normalize=True), 1.0
    if kind is Sparsifier.L1:
        n2 = res.n ** 2
        return dense_loss(res, normalize=True) + cfg.l1_lambda * res.values.sum() / n2, 1.0
    if kind is Sparsifier.TOPK:
        m = topk_mask(res, cfg.topk)
        return dense_loss(res, m, normalize=True), m.density
    th = thresholds_for(res, beta_row, beta_col)
    soft = smooth_mask(res, th, cfg.temperature, cfg.threshold_space)
    hard = hard_mask(res, th, cfg.threshold_space)
    return dense_loss(res, soft, normalize=True), hard.density


def total_loss(images: LocalBatch, texts: LocalBatch, betas: Tensor,
               cfg: ObjectiveConfig | None = None, neg_text=None, neg_img=None,
               rng: np.random.Generator | None = None,
               negative_clip: float = 100.0) -> LossBreakdown:
    """Combined objective on a batch of projected, index-aligned pairs.

    ``betas`` holds (inter_row, inter_col, intra_row, intra_col). Without
    explicit negatives, they are mined from the current similarities
    using ``rng``.
    """
    cfg = cfg or ObjectiveConfig()
    w = cfg.weights
    n = len(images)
    if len(texts) != n:
        raise ValueError("image and text batches must be index-aligned pairs")

    v_hat, t_hat = pair_globals(images, texts)
    S = (v_hat * t_hat).sum(-1) / ((v_hat.norm(dim=-1) + 1e-8) * (t_hat.norm(dim=-1) + 1e-8))
    if neg_text is None or neg_img is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        neg_text, neg_img = mine_from_similarity(S, images.vectors.shape[-1], rng, negative_clip)
    neg_text = torch.as_tensor(np.asarray(neg_text), dtype=torch.long)
    neg_img = torch.as_tensor(np.asarray(neg_img), dtype=torch.long)
    loc = batch_triplet_loss(S, neg_text, neg_img, w.margin_alpha)

    zero = S.new_zeros(())
    dim = zero
    if w.w_dim:
        bank = bank_from_batches(images, texts, cfg.dim_bank_mode, cfg.dim_resample_k, rng)
        dim = dim_align_loss(correlation_matrix(bank), cfg.dim_variant)

    inter, dens_inter = zero, 0.0
    if w.w_inter:
        res = inter_residual(1.0 - S)
        inter, dens_inter = spatial_term(res, betas[0], betas[1], cfg)

    intra, dens_intra = zero, 0.0
    if w.w_intra:
        idx = torch.arange(n)
        res = intra_residual(intra_distance(v_hat[idx, idx], t_hat[idx, idx]))
        intra, dens_intra = spatial_term(res, betas[2], betas[3], cfg)

    total = loc + w.w_dim * dim + w.w_inter * inter + w.w_intra * intra
    return LossBreakdown(total, loc, dim, inter, intra, dens_inter, dens_intra, S)

