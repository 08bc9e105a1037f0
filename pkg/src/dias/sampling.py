"""Neighbour batch sampling: cluster images with K-means, draw P images from M clusters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BatchSpec:
    clusters_M: int = 16
    per_cluster_P: int = 8
    kmeans_k: int = 64
    kmeans_iters: int = 20
    seed: int = 0

    def __post_init__(self):
        if min(self.clusters_M, self.per_cluster_P, self.kmeans_k, self.kmeans_iters) < 1:
            raise ValueError("batch spec values must be positive")
        if self.kmeans_k < self.clusters_M:
            raise ValueError("kmeans_k must be at least clusters_M")

    @property
    def batch_N(self) -> int:
        return self.clusters_M * self.per_cluster_P


@dataclass
class Batch:
    images: np.ndarray          # image indices into the corpus, unique
    texts: np.ndarray           # one matched text index per image
    slots: np.ndarray           # cluster each image was drawn for


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(1)
    for c in range(1, k):
        total = d2.sum()
        i = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers[c] = x[i]
        d2 = np.minimum(d2, ((x - centers[c]) ** 2).sum(1))
    return centers


def kmeans(x: np.ndarray, k: int, iters: int = 20,
           rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from k-means++ seeds. Returns (centers, labels).

    An emptied cluster is re-seeded at the point farthest from its center.
    """
    x = np.asarray(x, dtype=np.float64)
    if k > x.shape[0]:
        raise ValueError(f"cannot form {k} clusters from {x.shape[0]} points")
    rng = rng if rng is not None else np.random.default_rng(0)
    centers = kmeans_pp_init(x, k, rng)
    labels = np.zeros(x.shape[0], dtype=np.int64)
    for _ in range(iters):
        d2 = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
        labels = d2.argmin(1)
        new = centers.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = x[members].mean(0)
            else:
                far = d2[np.arange(len(x)), labels].argmax()
                new[c] = x[far]
                labels[far] = c
        if np.array_equal(new, centers):
            break
        centers = new
    d2 = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
    return centers, d2.argmin(1)


def sample_batches(image_embeddings: np.ndarray, texts_of: list, spec: BatchSpec,
                   rng: np.random.Generator, num_batches: int | None = None) -> list[Batch]:
    """Batches of M x P matched pairs drawn cluster by cluster.

    ``image_embeddings`` are the pooled image embeddings (one row per
    image) and ``texts_of[i]`` the matched text indices of image i. One
    K-means run serves every batch of the call. A cluster with fewer than
    P unused images is topped up from its nearest clusters.
    """
    x = np.asarray(image_embeddings, dtype=np.float64)
    n = x.shape[0]
    N = spec.batch_N
    if n < N:
        raise ValueError(f"corpus of {n} images is smaller than the batch size {N}")
    k = min(spec.kmeans_k, n)
    centers, labels = kmeans(x, k, spec.kmeans_iters, rng)
    members = [np.flatnonzero(labels == c) for c in range(k)]
    nonempty = np.array([c for c in range(k) if len(members[c])])
    if len(nonempty) < spec.clusters_M:
        raise ValueError(f"only {len(nonempty)} non-empty clusters for M={spec.clusters_M}")
    cd = ((centers[:, None, :] - centers[None]) ** 2).sum(-1)
    nearest = np.argsort(cd, axis=1, kind="stable")

    if num_batches is None:
        num_batches = max(1, n // N)
    batches = []
    for _ in range(num_batches):
        chosen = rng.choice(nonempty, size=spec.clusters_M, replace=False)
        used: set[int] = set()
        imgs, slots = [], []
        for c in chosen:
            picked: list[int] = []
            for donor in nearest[c]:
                pool = [i for i in members[donor] if i not in used]
                need = spec.per_cluster_P - len(picked)
                if not pool:
                    continue
                take = rng.choice(pool, size=min(need, len(pool)), replace=False)
                picked.extend(int(i) for i in take)
                used.update(int(i) for i in take)
                if len(picked) == spec.per_cluster_P:
                    break
            imgs.extend(picked)
            slots.extend([int(c)] * len(picked))
        images = np.array(imgs, dtype=np.int64)
        texts = np.array([texts_of[i][rng.integers(len(texts_of[i]))] for i in images], dtype=np.int64)
        batches.append(Batch(images, texts, np.array(slots, dtype=np.int64)))
    return batches
