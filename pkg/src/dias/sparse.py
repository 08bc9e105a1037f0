"""Adaptive selection of strong spatial relationships.

Residuals are mapped to conditional probabilities p = sigmoid(-r). Each row
and column gets a soft threshold mu + beta * std of its probabilities, and
an entry is kept when its residual exceeds both of its endpoints'
thresholds. ``threshold_space="magnitude"`` compares the raw residual with
the probability-valued threshold, exactly as the selection rule is written;
``"probability"`` keeps entries whose probability falls below
mu - beta * std on both sides instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch
from torch import Tensor

from .core import as_tensor
from .spatial import SpatialResidualMatrix


class ThresholdSpace(str, Enum):
    MAGNITUDE = "magnitude"
    PROBABILITY = "probability"


@dataclass(frozen=True)
class ConditionalProbabilityMatrix:
    values: Tensor


@dataclass(frozen=True)
class ThresholdSet:
    row_thresholds: Tensor
    col_thresholds: Tensor
    beta_row: Tensor
    beta_col: Tensor
    row_mean: Tensor
    row_std: Tensor
    col_mean: Tensor
    col_std: Tensor


@dataclass(frozen=True)
class SelectionMask:
    values: Tensor
    space: ThresholdSpace

    @property
    def selected_count(self) -> int:
        return int(self.values.sum())

    @property
    def density(self) -> float:
        return self.selected_count / self.values.numel()


def _values(res) -> Tensor:
    return res.values if isinstance(res, SpatialResidualMatrix) else as_tensor(res)


def conditional_probabilities(res) -> ConditionalProbabilityMatrix:
    return ConditionalProbabilityMatrix(torch.sigmoid(-_values(res)))


def _std(x: Tensor, dim: int, mean: Tensor) -> Tensor:
    # population std; the where() keeps the gradient finite for constant rows
    var = (x - mean.unsqueeze(dim)).square().mean(dim)
    safe = torch.where(var > 0, var, torch.ones_like(var))
    return torch.where(var > 0, safe.sqrt(), torch.zeros_like(var))


def soft_thresholds(P, beta_row, beta_col) -> ThresholdSet:
    p = P.values if isinstance(P, ConditionalProbabilityMatrix) else as_tensor(P)
    beta_row, beta_col = as_tensor(beta_row), as_tensor(beta_col)
    row_mean = p.mean(1)
    col_mean = p.mean(0)
    row_std = _std(p, 1, row_mean)
    col_std = _std(p, 0, col_mean)
    return ThresholdSet(
        row_thresholds=row_mean + beta_row * row_std,
        col_thresholds=col_mean + beta_col * col_std,
        beta_row=beta_row,
        beta_col=beta_col,
        row_mean=row_mean,
        row_std=row_std,
        col_mean=col_mean,
        col_std=col_std,
    )


def thresholds_for(res, beta_row, beta_col) -> ThresholdSet:
    return soft_thresholds(conditional_probabilities(res), beta_row, beta_col)


def _margin(res, th: ThresholdSet, space: ThresholdSpace) -> Tensor:
    """Positive where an entry is selected, negative where it is dropped."""
    r = _values(res)
    if space is ThresholdSpace.MAGNITUDE:
        return r - torch.maximum(th.row_thresholds[:, None], th.col_thresholds[None, :])
    low_row = th.row_mean - th.beta_row * th.row_std
    low_col = th.col_mean - th.beta_col * th.col_std
    return torch.minimum(low_row[:, None], low_col[None, :]) - torch.sigmoid(-r)


def hard_mask(res, thresholds: ThresholdSet,
              space: ThresholdSpace | str = ThresholdSpace.MAGNITUDE) -> SelectionMask:
    space = ThresholdSpace(space)
    with torch.no_grad():
        m = (_margin(res, thresholds, space) > 0).to(torch.float64)
    return SelectionMask(m, space)


def smooth_mask(res, thresholds: ThresholdSet, temperature: float = 0.1,
                space: ThresholdSpace | str = ThresholdSpace.MAGNITUDE) -> Tensor:
    """Differentiable relaxation sigmoid(margin / temperature) of the hard mask."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return torch.sigmoid(_margin(res, thresholds, ThresholdSpace(space)) / temperature)


def topk_mask(res, k: int) -> SelectionMask:
    """Keep the k largest residuals of every row (ties to the lower column)."""
    r = _values(res).detach()
    n = r.shape[1]
    k = max(0, min(k, n))
    m = torch.zeros_like(r)
    if k:
        order = torch.argsort(-r, dim=1, stable=True)[:, :k]
        m.scatter_(1, order, 1.0)
    return SelectionMask(m, ThresholdSpace.MAGNITUDE)
