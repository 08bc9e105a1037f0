"""Reusable experiment harnesses: per-term gradient checks, ablations, sparsifier comparison."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .config import TrainConfig
from .core import LocalBatch, grad_check
from .corpus import Corpus
from .dim_align import bank_from_batches, correlation_matrix, dim_align_loss
from .interaction import pair_globals
from .objective import ObjectiveConfig, batch_triplet_loss, total_loss
from .sparse import smooth_mask, thresholds_for
from .spatial import dense_loss, inter_residual, intra_distance, intra_residual
from .train import train

log = logging.getLogger(__name__)

ABLATIONS = {
    "full": {},
    "no_dia": {"objective": {"weights": {"w_dim": 0.0}}},
    "no_inter": {"objective": {"weights": {"w_inter": 0.0}}},
    "no_intra": {"objective": {"weights": {"w_intra": 0.0}}},
    "no_sparsity": {"objective": {"sparsifier": "none"}},
}

SPARSIFIERS = ("threshold", "topk", "l1")


def _globals(images, texts, p):
    I = LocalBatch.from_arrays(images).project(p["weight_image"], p["bias_image"])
    T = LocalBatch.from_arrays(texts).project(p["weight_text"], p["bias_text"])
    v_hat, t_hat = pair_globals(I, T)
    S = (v_hat * t_hat).sum(-1) / ((v_hat.norm(dim=-1) + 1e-8) * (t_hat.norm(dim=-1) + 1e-8))
    idx = torch.arange(len(images))
    return I, T, S, v_hat[idx, idx], t_hat[idx, idx]


def loss_terms(images, texts, neg_text, neg_img, cfg: ObjectiveConfig | None = None) -> dict:
    """Each objective term as a function of the named parameter set.

    Projection heads are always parameters; the masked terms and the
    total also take ``betas``.
    """
    cfg = cfg or ObjectiveConfig()
    nt = torch.as_tensor(neg_text)
    ni = torch.as_tensor(neg_img)
    tau, space = cfg.temperature, cfg.threshold_space

    def triplet(p):
        return batch_triplet_loss(_globals(images, texts, p)[2], nt, ni, cfg.weights.margin_alpha)

    def dim(variant):
        def f(p):
            I, T = _globals(images, texts, p)[:2]
            return dim_align_loss(correlation_matrix(bank_from_batches(I, T)), variant)
        return f

    def inter(p):
        return dense_loss(inter_residual(1.0 - _globals(images, texts, p)[2]), normalize=True)

    def intra(p):
        v, t = _globals(images, texts, p)[3:]
        return dense_loss(intra_residual(intra_distance(v, t)), normalize=True)

    def masked(p):
        _, _, S, v, t = _globals(images, texts, p)
        b = p["betas"]
        out = 0.0
        for res, br, bc in ((inter_residual(1.0 - S), b[0], b[1]),
                            (intra_residual(intra_distance(v, t)), b[2], b[3])):
            out = out + dense_loss(res, smooth_mask(res, thresholds_for(res, br, bc), tau, space), normalize=True)
        return out

    def total(p):
        I, T = _globals(images, texts, p)[:2]
        return total_loss(I, T, p["betas"], cfg, neg_text, neg_img).total

    return {
        "triplet": (triplet, False),
        "dim_naive": (dim("naive"), False),
        "dim_normalized": (dim("normalized"), False),
        "inter_dense": (inter, False),
        "intra_dense": (intra, False),
        "masked_spatial": (masked, True),
        "total": (total, True),
    }


@dataclass
class GradRow:
    term: str
    n: int
    dim: int
    parameter: str
    max_rel_error: float
    passed: bool


def gradient_suite(sizes=(2, 4, 6), dims=(4, 8), d_in: int = 5, seed: int = 0,
                   tolerance: float = 1e-4, step: float = 1e-5) -> list[GradRow]:
    """Finite-difference check of every objective term on random batches."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        for d in dims:
            images = [rng.normal(size=(int(rng.integers(1, 4)), d_in)) for _ in range(n)]
            texts = [rng.normal(size=(int(rng.integers(1, 4)), d_in)) for _ in range(n)]
            neg_text = np.array([(i + 1) % n for i in range(n)])
            neg_img = np.array([(i + n - 1) % n for i in range(n)])
            params = {
                "weight_image": rng.normal(size=(d_in, d)),
                "bias_image": 0.1 * rng.normal(size=d),
                "weight_text": rng.normal(size=(d_in, d)),
                "bias_text": 0.1 * rng.normal(size=d),
            }
            betas = rng.uniform(0.5, 1.5, size=4)
            for term, (fn, with_betas) in loss_terms(images, texts, neg_text, neg_img).items():
                p = dict(params, betas=betas) if with_betas else params
                for r in grad_check(fn, p, step=step, tolerance=tolerance):
                    rows.append(GradRow(term, n, d, r.parameter_name, r.max_rel_error, r.passed))
    return rows


def run_variants(corpus: Corpus, variants: dict[str, dict], seeds, base: TrainConfig | None = None) -> list[dict]:
    """Train every (variant, seed) under otherwise identical config; one record per run."""
    base = base or TrainConfig()
    records = []
    for seed in seeds:
        for name, override in variants.items():
            cfg = base.with_overrides({"seed": int(seed)}).with_overrides(override)
            res = train(corpus, cfg)
            rec = {"variant": name, "seed": int(seed), "initial_rsum": res.initial_val_rsum,
                   "rsum": res.final_val_rsum, **{k: v for k, v in res.final_report.as_dict().items() if k != "rsum"}}
            log.info("%s seed %d rsum %.2f", name, seed, rec["rsum"])
            records.append(rec)
    return records


def summarize(records: list[dict]) -> list[dict]:
    """Mean rSum per variant, in first-seen order."""
    names = list(dict.fromkeys(r["variant"] for r in records))
    out = []
    for name in names:
        vals = [r["rsum"] for r in records if r["variant"] == name]
        out.append({"variant": name, "runs": len(vals), "mean_rsum": float(np.mean(vals)),
                    "std_rsum": float(np.std(vals))})
    return out


def ablation(corpus, seeds=(0, 1, 2), base: TrainConfig | None = None) -> list[dict]:
    return run_variants(corpus, ABLATIONS, seeds, base)


def sparsifier_comparison(corpus, seeds=(0,), base: TrainConfig | None = None) -> list[dict]:
    return run_variants(corpus, {s: {"objective": {"sparsifier": s}} for s in SPARSIFIERS}, seeds, base)


def format_table(summary: list[dict]) -> str:
    lines = [f"{'variant':<14}{'runs':>5}{'mean_rsum':>12}{'std':>8}"]
    for row in summary:
        lines.append(f"{row['variant']:<14}{row['runs']:>5}{row['mean_rsum']:>12.2f}{row['std_rsum']:>8.2f}")
    return "\n".join(lines)
