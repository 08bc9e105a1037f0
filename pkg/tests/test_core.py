import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracle
from dias.core import (
    LocalBatch,
    LocalEmbeddingSet,
    Modality,
    ProjectionParams,
    cosine,
    grad_check,
    project,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


class TestCosine:
    def test_orthogonal(self):
        assert float(cosine([1, 0], [0, 1])) == 0.0

    def test_identical(self):
        assert float(cosine([1, 2], [1, 2])) == pytest.approx(1.0, abs=1e-6)

    def test_hand_value(self):
        # 32 / sqrt(14 * 77), evaluated independently by the loop oracle
        assert float(cosine([1, 2, 3], [4, 5, 6])) == pytest.approx(0.9746, abs=1e-4)
        assert float(cosine([1, 2, 3], [4, 5, 6])) == pytest.approx(oracle.cosine([1, 2, 3], [4, 5, 6]), abs=1e-15)

    def test_zero_vectors(self):
        assert float(cosine([0, 0], [0, 0])) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cosine([1, 2], [1, 2, 3])

    @given(arrays(np.float64, 4, elements=finite), arrays(np.float64, 4, elements=finite),
           st.floats(0.01, 100), st.floats(0.01, 100))
    def test_symmetry_and_scale_invariance(self, u, v, a, b):
        assert float(cosine(u, v)) == float(cosine(v, u))
        # EPS in the norms breaks exact invariance for tiny vectors
        if min(a * np.linalg.norm(u), b * np.linalg.norm(v), np.linalg.norm(u), np.linalg.norm(v)) > 0.1:
            assert float(cosine(a * u, b * v)) == pytest.approx(float(cosine(u, v)), abs=1e-6)

    @given(arrays(np.float64, 5, elements=finite))
    def test_self_cosine(self, u):
        if np.linalg.norm(u) >= 1e-4:
            assert float(cosine(u, u)) == pytest.approx(1.0, abs=1e-6)


class TestProject:
    def test_identity_on_unit_rows(self):
        raw = np.array([[0.6, 0.8], [1.0, 0.0]])
        out = project(raw, ProjectionParams.identity(2), Modality.IMAGE)
        np.testing.assert_allclose(out.vectors.numpy(), raw, atol=1e-7)

    def test_hand_normalisation(self):
        out = project([[3.0, 4.0]], ProjectionParams.identity(2), Modality.TEXT)
        np.testing.assert_allclose(out.vectors.numpy(), [[0.6, 0.8]], atol=1e-8)

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_rows_unit_norm_and_deterministic(self, seed):
        rng = np.random.default_rng(seed)
        params = ProjectionParams.init(7, 5, 4, seed=seed, scale=1.0)
        params.bias_image = torch.as_tensor(rng.normal(size=4))
        raw = rng.normal(size=(3, 7)) * 10 ** rng.uniform(-3, 3)
        a = project(raw, params, Modality.IMAGE).vectors
        b = project(raw, params, Modality.IMAGE).vectors
        np.testing.assert_allclose(a.norm(dim=1).numpy(), 1.0, atol=1e-6)
        assert torch.equal(a, b)

    def test_matches_loop_oracle(self, rng):
        params = ProjectionParams.init(4, 4, 3, seed=3, scale=1.0)
        raw = rng.normal(size=(2, 4))
        got = project(raw, params, Modality.IMAGE).vectors.numpy()
        want = oracle.project(raw.tolist(), params.weight_image.tolist(), params.bias_image.tolist())
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project(np.ones((2, 3)), ProjectionParams.identity(2), Modality.IMAGE)


class TestLocalEmbeddingSet:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            LocalEmbeddingSet(0, Modality.IMAGE, [[1.0, math.nan]])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            LocalEmbeddingSet(0, Modality.TEXT, np.zeros((0, 3)))

    def test_padding_mask(self):
        batch = LocalBatch.from_arrays([np.ones((2, 3)), np.ones((4, 3))])
        assert batch.vectors.shape == (2, 4, 3)
        assert batch.mask.sum(1).tolist() == [2, 4]
        np.testing.assert_allclose(batch.mean().numpy(), np.ones((2, 3)))


class TestGradCheck:
    def test_quadratic(self):
        reports = grad_check(lambda p: 0.5 * (p["p"] ** 2).sum(), {"p": np.array([1.0, 2.0])})
        assert reports[0].passed
        assert reports[0].max_rel_error < 1e-6

    def test_constant(self):
        reports = grad_check(lambda p: p["p"].sum() * 0 + 3.0, {"p": np.array([1.0, 2.0])})
        assert all(r.passed for r in reports)
        assert reports[0].max_rel_error == 0.0

    def test_detects_wrong_gradient(self):
        class Wrong(torch.autograd.Function):
            @staticmethod
            def forward(ctx, x):
                return (x ** 2).sum()

            @staticmethod
            def backward(ctx, g):
                return g * torch.ones(2, dtype=torch.float64)

        reports = grad_check(lambda p: Wrong.apply(p["p"]), {"p": np.array([1.0, 2.0])})
        assert not reports[0].passed

    def test_non_finite_probe_reported(self):
        reports = grad_check(lambda p: torch.log(p["p"]).sum(), {"p": np.array([1e-6])})
        assert not reports[0].passed
        assert "non-finite" in reports[0].diagnostic

    def test_report_invariant(self):
        for r in grad_check(lambda p: (p["a"] ** 3).sum(), {"a": np.array([0.3, -1.2])}):
            assert r.passed == (r.max_rel_error <= r.tolerance)
