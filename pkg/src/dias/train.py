"""Training loop: neighbour-sampled batches, Adam with per-epoch decay, JSON-lines log."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .core import DTYPE, LocalBatch, ProjectionParams
from .corpus import Corpus
from .evaluation import EvalReport, evaluate
from .objective import total_loss
from .sampling import sample_batches

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "lr", "loss_total", "loss_loc", "loss_dim", "loss_inter",
              "loss_intra", "mask_density_inter", "mask_density_intra", "val_rsum")


@dataclass
class TrainState:
    projection: ProjectionParams
    betas: torch.Tensor                 # inter_row, inter_col, intra_row, intra_col
    optimizer_moments: dict = field(default_factory=dict)
    epoch: int = 0
    learning_rate: float = 5e-4


@dataclass
class TrainResult:
    state: TrainState
    trace: list[dict]
    initial_report: EvalReport
    final_report: EvalReport

    @property
    def initial_val_rsum(self) -> float:
        return self.initial_report.rsum

    @property
    def final_val_rsum(self) -> float:
        return self.final_report.rsum


def lr_at(epoch: int, base: float = 5e-4, decay: float = 0.9) -> float:
    return base * decay ** epoch


def split_corpus(corpus: Corpus, val_size: int) -> tuple[Corpus, Corpus]:
    """Last ``val_size`` images (with their texts) are held out for validation."""
    n = corpus.num_images
    if not 0 < val_size < n:
        raise ValueError(f"val_size must be in (0, {n})")
    return corpus.subset(range(n - val_size)), corpus.subset(range(n - val_size, n))


def _record(epoch: int, lr: float, parts: list[dict], val_rsum: float) -> dict:
    rec = {"epoch": epoch, "lr": lr}
    for key in LOG_FIELDS[2:-1]:
        rec[key] = float(np.mean([p[key] for p in parts])) if parts else 0.0
    rec["val_rsum"] = val_rsum
    return rec


def train(corpus: Corpus, cfg: TrainConfig | None = None, log_path=None,
          val_corpus: Corpus | None = None) -> TrainResult:
    """Fit projection heads and threshold betas; deterministic for a fixed ``cfg.seed``.

    Without ``val_corpus`` the last ``cfg.val_size`` images are held out.
    """
    cfg = cfg or TrainConfig()
    if val_corpus is None:
        train_set, val_set = split_corpus(corpus, cfg.val_size)
    else:
        train_set, val_set = corpus, val_corpus
    rng = np.random.default_rng(cfg.seed)

    params = ProjectionParams.init(train_set.d_in_image, train_set.d_in_text, cfg.dim,
                                   seed=cfg.seed, scale=cfg.init_scale)
    leaves = [t.clone().requires_grad_(True) for t in params.named().values()]
    params = ProjectionParams(*leaves)
    betas = torch.full((4,), cfg.beta_init, dtype=DTYPE, requires_grad=True)

    opt = torch.optim.Adam(leaves + [betas], lr=cfg.lr, betas=cfg.adam_betas, eps=cfg.adam_eps)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=cfg.lr_decay)

    all_images = LocalBatch.from_arrays(train_set.images)
    all_texts = LocalBatch.from_arrays(train_set.texts)
    initial = evaluate(val_set, params, cfg.eval_chunk)
    report = initial
    trace: list[dict] = []
    sink = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(cfg.epochs):
            lr = opt.param_groups[0]["lr"]
            with torch.no_grad():
                pooled = all_images.project(params.weight_image, params.bias_image).mean()
                pooled = pooled / pooled.norm(dim=1, keepdim=True).clamp_min(1e-8)
            batches = sample_batches(pooled.numpy(), train_set.text_ids, cfg.batch, rng)
            parts = []
            for b in batches:
                imgs = all_images.index(b.images).project(params.weight_image, params.bias_image)
                txts = all_texts.index(b.texts).project(params.weight_text, params.bias_text)
                out = total_loss(imgs, txts, betas, cfg.objective, rng=rng,
                                 negative_clip=cfg.negative_clip)
                for term in ("loc", "dim", "inter", "intra", "total"):
                    if not math.isfinite(getattr(out, term).item()):
                        raise FloatingPointError(f"non-finite {term} loss at epoch {epoch}")
                opt.zero_grad()
                out.total.backward()
                opt.step()
                parts.append(out.as_floats())
            sched.step()
            report = evaluate(val_set, params, cfg.eval_chunk)
            rec = _record(epoch, lr, parts, report.rsum)
            trace.append(rec)
            log.info("epoch %d lr %.3g loss %.4f val_rsum %.1f", epoch, lr, rec["loss_total"], rec["val_rsum"])
            if sink is not None:
                sink.write(json.dumps(rec) + "\n")
                sink.flush()
    finally:
        if sink is not None:
            sink.close()

    detached = ProjectionParams(*[t.detach().clone() for t in leaves])
    moments = {i: {k: v.detach().clone() for k, v in s.items() if torch.is_tensor(v)}
               for i, s in enumerate(opt.state.values())}
    state = TrainState(detached, betas.detach().clone(), moments, cfg.epochs,
                       opt.param_groups[0]["lr"])
    return TrainResult(state, trace, initial, report)


def save_state(state: TrainState, path) -> None:
    arrays = {k: v.numpy() for k, v in state.projection.named().items()}
    arrays["betas"] = state.betas.numpy()
    np.savez(Path(path), **arrays)


def load_params(path) -> tuple[ProjectionParams, torch.Tensor]:
    with np.load(Path(path)) as z:
        params = ProjectionParams(z["weight_image"], z["bias_image"], z["weight_text"], z["bias_text"])
        betas = torch.as_tensor(z["betas"], dtype=DTYPE) if "betas" in z else torch.ones(4, dtype=DTYPE)
    return params, betas
