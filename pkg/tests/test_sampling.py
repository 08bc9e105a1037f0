import numpy as np
import pytest

from dias.sampling import BatchSpec, kmeans, sample_batches


def texts_of(n, per=5):
    return [list(range(per * i, per * i + per)) for i in range(n)]


class TestBatchSpec:
    def test_batch_size(self):
        assert BatchSpec(clusters_M=16, per_cluster_P=8).batch_N == 128

    def test_k_below_m(self):
        with pytest.raises(ValueError):
            BatchSpec(clusters_M=4, kmeans_k=2)


class TestKMeans:
    def test_recovers_blobs(self):
        rng = np.random.default_rng(0)
        x = np.vstack([rng.normal(0, 0.1, (30, 2)), rng.normal(10, 0.1, (30, 2))])
        _, labels = kmeans(x, 2, rng=rng)
        assert len(set(labels[:30])) == 1 and len(set(labels[30:])) == 1
        assert labels[0] != labels[30]

    def test_too_many_clusters(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 2)), 4)

    def test_deterministic(self, rng):
        x = rng.normal(size=(50, 3))
        a = kmeans(x, 5, rng=np.random.default_rng(3))
        b = kmeans(x, 5, rng=np.random.default_rng(3))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


class TestSampleBatches:
    def test_contract(self, rng):
        x = rng.normal(size=(100, 4))
        spec = BatchSpec(clusters_M=4, per_cluster_P=5, kmeans_k=8)
        batches = sample_batches(x, texts_of(100), spec, np.random.default_rng(0))
        assert len(batches) == 100 // 20
        for b in batches:
            assert len(b.images) == 20 and len(set(b.images.tolist())) == 20
            assert len(set(b.slots.tolist())) <= 4
            for i, t in zip(b.images, b.texts):
                assert t in texts_of(100)[i]

    def test_single_cluster(self, rng):
        x = rng.normal(size=(40, 3))
        spec = BatchSpec(clusters_M=1, per_cluster_P=10, kmeans_k=1)
        seen = np.zeros(40)
        for b in sample_batches(x, texts_of(40), spec, np.random.default_rng(1), num_batches=200):
            seen[b.images] += 1
        # uniform subsets: every image is drawn about 200 * 10 / 40 = 50 times
        assert seen.min() > 25 and seen.max() < 80

    def test_blob_purity(self):
        rng = np.random.default_rng(4)
        x = np.vstack([rng.normal(0, 0.1, (40, 3)), rng.normal(20, 0.1, (40, 3))])
        spec = BatchSpec(clusters_M=1, per_cluster_P=8, kmeans_k=2)
        for b in sample_batches(x, texts_of(80), spec, rng, num_batches=50):
            assert np.all(b.images < 40) or np.all(b.images >= 40)

    def test_top_up_from_nearest(self):
        # a 2-point cluster next to a 20-point one, far from a third
        rng = np.random.default_rng(2)
        x = np.vstack([rng.normal(0, 0.05, (2, 2)), rng.normal(3, 0.05, (20, 2)), rng.normal(100, 0.05, (20, 2))])
        spec = BatchSpec(clusters_M=1, per_cluster_P=6, kmeans_k=3)
        for b in sample_batches(x, texts_of(42), spec, rng, num_batches=60):
            assert len(set(b.images.tolist())) == 6
            if np.any(b.images < 2):
                assert np.all(b.images < 22)

    def test_corpus_too_small(self, rng):
        with pytest.raises(ValueError):
            sample_batches(rng.normal(size=(10, 2)), texts_of(10), BatchSpec(2, 8, 4), rng)
