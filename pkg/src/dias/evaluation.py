"""Recall@K retrieval metrics in both directions and k-fold averaging."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch

from .core import LocalBatch, ProjectionParams
from .corpus import Corpus
from .interaction import similarity_matrix

KS = (1, 5, 10)
REPORT_KEYS = ("i2t_r1", "i2t_r5", "i2t_r10", "t2i_r1", "t2i_r5", "t2i_r10")


@dataclass
class EvalReport:
    i2t: dict[int, float]
    t2i: dict[int, float]
    fold_count: int = 1

    @property
    def rsum(self) -> float:
        return sum([self.i2t[k] for k in KS] + [self.t2i[k] for k in KS])

    def as_dict(self) -> dict[str, float]:
        out = {f"i2t_r{k}": self.i2t[k] for k in KS}
        out.update({f"t2i_r{k}": self.t2i[k] for k in KS})
        out["rsum"] = self.rsum
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=False)


def ranks_of_first_hit(similarity: np.ndarray, ground_truth) -> np.ndarray:
    """0-based rank of the best-ranked ground-truth column for every query row.

    Candidates are ordered by descending similarity with ties going to the
    lower column index.
    """
    sim = np.asarray(similarity, dtype=np.float64)
    n_q = sim.shape[0]
    ranks = np.empty(n_q, dtype=np.int64)
    for q in range(n_q):
        order = np.lexsort((np.arange(sim.shape[1]), -sim[q]))
        hit = np.isin(order, list(ground_truth[q]))
        if not hit.any():
            raise ValueError(f"query {q} has no ground-truth candidate")
        ranks[q] = int(np.argmax(hit))
    return ranks


def recall_at_k(similarity, ground_truth, K: int) -> float:
    """Percentage of queries with a ground-truth item among the top-K candidates."""
    if K < 1:
        raise ValueError("K must be at least 1")
    ranks = ranks_of_first_hit(similarity, ground_truth)
    return 100.0 * float((ranks < K).mean())


def report_from_similarity(sim: np.ndarray, text_ids, text_image) -> EvalReport:
    """Image-to-text (any of the matched texts counts) and text-to-image recalls.

    ``sim`` is (num_images, num_texts).
    """
    sim = np.asarray(sim, dtype=np.float64)
    r_i2t = ranks_of_first_hit(sim, [set(ids) for ids in text_ids])
    r_t2i = ranks_of_first_hit(sim.T, [{int(i)} for i in text_image])
    i2t = {k: 100.0 * float((r_i2t < k).mean()) for k in KS}
    t2i = {k: 100.0 * float((r_t2i < k).mean()) for k in KS}
    return EvalReport(i2t, t2i)


def corpus_similarity(corpus: Corpus, params: ProjectionParams, chunk: int = 16) -> np.ndarray:
    """Pairwise similarity of every image with every text under ``params``."""
    with torch.no_grad():
        imgs = LocalBatch.from_arrays(corpus.images).project(params.weight_image, params.bias_image)
        txts = LocalBatch.from_arrays(corpus.texts).project(params.weight_text, params.bias_text)
        return similarity_matrix(imgs, txts, chunk=chunk).numpy()


def evaluate(corpus: Corpus, params: ProjectionParams, chunk: int = 16) -> EvalReport:
    sim = corpus_similarity(corpus, params, chunk)
    return report_from_similarity(sim, corpus.text_ids, corpus.text_image)


def average_reports(reports: list[EvalReport]) -> EvalReport:
    i2t = {k: float(np.mean([r.i2t[k] for r in reports])) for k in KS}
    t2i = {k: float(np.mean([r.t2i[k] for r in reports])) for k in KS}
    return EvalReport(i2t, t2i, fold_count=len(reports))


def five_fold_eval(corpus: Corpus, params: ProjectionParams, folds: int = 5,
                   chunk: int = 16) -> EvalReport:
    """Evaluate each contiguous fold of images independently and average the metrics."""
    n = corpus.num_images
    if n % folds:
        raise ValueError(f"{n} images cannot be split into {folds} equal folds")
    size = n // folds
    reports = [evaluate(corpus.subset(range(f * size, (f + 1) * size)), params, chunk)
               for f in range(folds)]
    return average_reports(reports)
