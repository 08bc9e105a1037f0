"""Embedding data model, similarity primitives and the gradient checker."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np
import torch
from torch import Tensor

EPS = 1e-8
DTYPE = torch.float64


class Modality(str, Enum):
    IMAGE = "image"
    TEXT = "text"


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x if x.dtype == DTYPE else x.to(DTYPE)
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


@dataclass(frozen=True)
class LocalEmbeddingSet:
    """Region (image) or word (text) vectors of one instance, shape (count, d)."""

    instance_id: int
    modality: Modality
    vectors: Tensor

    def __post_init__(self):
        v = as_tensor(self.vectors)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError(f"expected a non-empty (count, d) matrix, got shape {tuple(v.shape)}")
        if not torch.isfinite(v).all():
            raise ValueError(f"instance {self.instance_id} has non-finite entries")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "modality", Modality(self.modality))

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class GlobalEmbedding:
    instance_id: int
    modality: Modality
    vector: Tensor


@dataclass
class ProjectionParams:
    """Learnable affine heads mapping raw features of each modality to d dims."""

    weight_image: Tensor
    bias_image: Tensor
    weight_text: Tensor
    bias_text: Tensor

    def __post_init__(self):
        for name in ("weight_image", "bias_image", "weight_text", "bias_text"):
            setattr(self, name, as_tensor(getattr(self, name)))
        if self.weight_image.shape[1] != self.weight_text.shape[1]:
            raise ValueError("image and text heads must share the output dimensionality")

    @classmethod
    def init(cls, d_in_image: int, d_in_text: int, dim: int, seed: int = 0,
             scale: float = 0.1) -> ProjectionParams:
        rng = np.random.default_rng(seed)
        return cls(
            weight_image=rng.normal(0.0, scale / math.sqrt(d_in_image), (d_in_image, dim)),
            bias_image=np.zeros(dim),
            weight_text=rng.normal(0.0, scale / math.sqrt(d_in_text), (d_in_text, dim)),
            bias_text=np.zeros(dim),
        )

    @classmethod
    def identity(cls, dim: int) -> ProjectionParams:
        eye = np.eye(dim)
        return cls(eye, np.zeros(dim), eye.copy(), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.weight_image.shape[1]

    def named(self) -> dict[str, Tensor]:
        return {
            "weight_image": self.weight_image,
            "bias_image": self.bias_image,
            "weight_text": self.weight_text,
            "bias_text": self.bias_text,
        }

    def head(self, modality: Modality) -> tuple[Tensor, Tensor]:
        if Modality(modality) is Modality.IMAGE:
            return self.weight_image, self.bias_image
        return self.weight_text, self.bias_text


def l2_normalize(x: Tensor) -> Tensor:
    return x / (x.norm(dim=-1, keepdim=True) + EPS)


def cosine(u, v) -> Tensor:
    """Cosine similarity along the last axis, with EPS added to each norm."""
    u, v = as_tensor(u), as_tensor(v)
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"length mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    return (u * v).sum(-1) / ((u.norm(dim=-1) + EPS) * (v.norm(dim=-1) + EPS))


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """All-pairs cosine between rows of ``a`` (n, d) and ``b`` (m, d)."""
    return l2_normalize(a) @ l2_normalize(b).T


def project_rows(raw: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if raw.shape[-1] != weight.shape[0]:
        raise ValueError(f"input has {raw.shape[-1]} columns, head expects {weight.shape[0]}")
    return l2_normalize(raw @ weight + bias)


def project(raw, params: ProjectionParams, modality: Modality,
            instance_id: int = 0) -> LocalEmbeddingSet:
    weight, bias = params.head(modality)
    return LocalEmbeddingSet(instance_id, modality, project_rows(as_tensor(raw), weight, bias))


@dataclass
class LocalBatch:
    """Variable-length local sets padded to (B, n_max, d) with a validity mask."""

    vectors: Tensor
    mask: Tensor

    @classmethod
    def from_arrays(cls, arrays: Sequence) -> LocalBatch:
        arrays = [as_tensor(a) for a in arrays]
        n_max = max(a.shape[0] for a in arrays)
        d = arrays[0].shape[1]
        vectors = torch.zeros(len(arrays), n_max, d, dtype=DTYPE)
        mask = torch.zeros(len(arrays), n_max, dtype=torch.bool)
        for i, a in enumerate(arrays):
            vectors[i, : a.shape[0]] = a
            mask[i, : a.shape[0]] = True
        return cls(vectors, mask)

    @classmethod
    def from_sets(cls, sets: Sequence[LocalEmbeddingSet]) -> LocalBatch:
        return cls.from_arrays([s.vectors for s in sets])

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def index(self, idx) -> LocalBatch:
        idx = torch.as_tensor(idx, dtype=torch.long)
        return LocalBatch(self.vectors[idx], self.mask[idx])

    def project(self, weight: Tensor, bias: Tensor) -> LocalBatch:
        out = project_rows(self.vectors, weight, bias) * self.mask.unsqueeze(-1)
        return LocalBatch(out, self.mask)

    def mean(self) -> Tensor:
        """Per-instance mean of valid rows, shape (B, d)."""
        m = self.mask.unsqueeze(-1).to(DTYPE)
        return (self.vectors * m).sum(1) / m.sum(1)


@dataclass
class GradCheckReport:
    parameter_name: str
    max_rel_error: float
    tolerance: float
    passed: bool
    diagnostic: str = ""
    worst_index: tuple = field(default=())


def grad_check(loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
               params: Mapping[str, Tensor], step: float = 1e-5,
               tolerance: float = 1e-4) -> list[GradCheckReport]:
    """Compare autograd gradients of ``loss_fn`` with central differences.

    ``loss_fn`` receives a dict of float64 tensors keyed like ``params`` and
    returns a scalar tensor. The relative error per scalar is
    ``|a - f| / max(1e-8, |a| + |f|)``.
    """
    base = {k: as_tensor(v).detach().clone() for k, v in params.items()}
    leaves = {k: v.clone().requires_grad_(True) for k, v in base.items()}
    loss = loss_fn(leaves)
    if not torch.isfinite(loss):
        return [GradCheckReport(k, math.inf, tolerance, False, "non-finite loss at base point")
                for k in base]
    grads = torch.autograd.grad(loss, list(leaves.values()), allow_unused=True)

    reports = []
    for (name, value), grad in zip(base.items(), grads):
        analytic = torch.zeros_like(value) if grad is None else grad.detach()
        worst, worst_idx, diag = 0.0, (), ""
        with torch.no_grad():
            for idx in np.ndindex(*value.shape):
                probe = dict(base)
                plus = value.clone()
                plus[idx] += step
                probe[name] = plus
                f_plus = float(loss_fn(probe))
                minus = value.clone()
                minus[idx] -= step
                probe[name] = minus
                f_minus = float(loss_fn(probe))
                if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                    worst, worst_idx = math.inf, idx
                    diag = f"non-finite loss when probing {name}{list(idx)}"
                    break
                fd = (f_plus - f_minus) / (2 * step)
                a = float(analytic[idx])
                rel = abs(a - fd) / max(1e-8, abs(a) + abs(fd))
                if rel > worst:
                    worst, worst_idx = rel, idx
        reports.append(GradCheckReport(name, worst, tolerance, worst <= tolerance, diag, worst_idx))
    return reports
