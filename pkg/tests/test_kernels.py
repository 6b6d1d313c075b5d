import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rkhskit.errors import ConfigError, InputError
from rkhskit.kernels import (
    Gaussian,
    Linear,
    Product,
    RandomFeatures,
    Sum,
    build_feature_map,
    cross_gram,
    eval_kernel,
    gram,
    kernel_from_dict,
    kernel_to_dict,
    parse_kernel,
)

VARIANTS = [
    Linear(),
    Gaussian(1.0),
    Gaussian(0.3),
    RandomFeatures(1.0, 200, seed=7),
    Sum(Linear(), Gaussian(2.0)),
    Product(Gaussian(1.0), Linear()),
    Sum(Product(Linear(), Linear()), RandomFeatures(0.5, 50, seed=1)),
]


def direct_gaussian(x, y, gamma):
    return math.exp(-gamma * sum((a - b) ** 2 for a, b in zip(x, y)))


class TestEval:
    def test_linear_dot(self):
        assert eval_kernel(Linear(), [1, 2], [3, 4]) == 11.0

    def test_gaussian_diagonal_is_one(self):
        assert eval_kernel(Gaussian(1.0), [0.3, -2.0], [0.3, -2.0]) == 1.0

    def test_gaussian_unit_distance(self):
        assert eval_kernel(Gaussian(1.0), [0.0], [1.0]) == pytest.approx(math.exp(-1), rel=1e-15)
        assert eval_kernel(Gaussian(1.0), [0.0], [1.0]) == pytest.approx(0.367879, abs=1e-6)

    def test_sum_and_product(self):
        x, y = [0.5, 1.0], [1.5, -1.0]
        lin = 0.5 * 1.5 - 1.0
        g = direct_gaussian(x, y, 2.0)
        assert eval_kernel(Sum(Linear(), Gaussian(2.0)), x, y) == pytest.approx(lin + g, rel=1e-14)
        assert eval_kernel(Product(Linear(), Gaussian(2.0)), x, y) == pytest.approx(lin * g, rel=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            eval_kernel(Linear(), [1, 2], [1, 2, 3])

    @pytest.mark.parametrize("spec", [Gaussian(0.0), Gaussian(-1.0), RandomFeatures(1.0, 0),
                                      RandomFeatures(1.0, 10, family="nope"), Sum(Linear(), Gaussian(-2))])
    def test_invalid_spec(self, spec):
        with pytest.raises(ConfigError):
            eval_kernel(spec, [1.0], [2.0])

    @pytest.mark.parametrize("spec", VARIANTS, ids=repr)
    def test_symmetry_bitwise(self, spec):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x, y = rng.normal(size=(2, 3))
            assert eval_kernel(spec, x, y) == eval_kernel(spec, y, x)


class TestGram:
    def test_linear_identity_rows(self):
        np.testing.assert_array_equal(gram(Linear(), np.eye(2)).entries, np.eye(2))

    def test_gaussian_two_points(self):
        e = math.exp(-1)
        np.testing.assert_allclose(gram(Gaussian(1.0), [[0.0], [1.0]]).entries, [[1, e], [e, 1]], rtol=1e-15)

    def test_sum_linear_linear(self):
        np.testing.assert_array_equal(gram(Sum(Linear(), Linear()), [[1.0]]).entries, [[2.0]])

    def test_empty(self):
        with pytest.raises(InputError):
            gram(Linear(), np.empty((0, 2)))

    def test_entries_match_eval(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(8, 3))
        for spec in VARIANTS:
            k = gram(spec, pts).entries
            ref = np.array([[eval_kernel(spec, a, b) for b in pts] for a in pts])
            np.testing.assert_allclose(k, ref, rtol=1e-12, atol=1e-14)

    def test_expanded_distance_path_agrees(self):
        # large enough to trigger the BLAS form
        rng = np.random.default_rng(1)
        pts = rng.uniform(size=(2100, 4))
        k = gram(Gaussian(1.0), pts).entries
        sub = pts[:50]
        ref = np.exp(-((sub[:, None, :] - sub[None, :, :]) ** 2).sum(-1))
        np.testing.assert_allclose(k[:50, :50], ref, atol=1e-12)
        assert np.all(np.diag(k) == 1.0)

    @pytest.mark.parametrize("spec", VARIANTS, ids=repr)
    def test_symmetric_and_psd(self, spec):
        rng = np.random.default_rng(11)
        for n in (1, 5, 20, 50):
            k = gram(spec, rng.normal(size=(n, 3))).entries
            assert np.array_equal(k, k.T)
            eps = 1e-8 * np.trace(k) / n
            assert np.linalg.eigvalsh(k).min() >= -eps

    def test_kernel_algebra(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(30, 2))
        k1, k2 = Gaussian(0.7), Linear()
        g1, g2 = gram(k1, pts).entries, gram(k2, pts).entries
        np.testing.assert_allclose(gram(Sum(k1, k2), pts).entries, g1 + g2, atol=1e-12)
        np.testing.assert_allclose(gram(Product(k1, k2), pts).entries, g1 * g2, atol=1e-12)

    def test_points_hash_tracks_inputs(self):
        a = gram(Linear(), [[1.0], [2.0]])
        b = gram(Linear(), [[1.0], [2.0]])
        c = gram(Linear(), [[1.0], [2.5]])
        assert a.points_hash == b.points_hash != c.points_hash


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 4)),
              elements=st.floats(-5, 5, allow_nan=False)))
def test_gram_psd_property(pts):
    for spec in (Gaussian(1.0), Linear(), Sum(Gaussian(0.5), Linear())):
        k = gram(spec, pts).entries
        n = k.shape[0]
        assert np.array_equal(k, k.T)
        assert np.linalg.eigvalsh(k).min() >= -1e-8 * max(np.trace(k), 1e-300) / n - 1e-12


class TestCrossGram:
    def test_equals_gram_when_same(self):
        pts = np.random.default_rng(2).normal(size=(6, 2))
        np.testing.assert_allclose(cross_gram(Gaussian(1.0), pts, pts), gram(Gaussian(1.0), pts).entries,
                                   rtol=1e-15)

    def test_linear(self):
        np.testing.assert_array_equal(cross_gram(Linear(), [[2.0]], [[3.0], [5.0]]), [[6.0, 10.0]])

    def test_gaussian_gamma2(self):
        np.testing.assert_allclose(cross_gram(Gaussian(2.0), [[0.0]], [[1.0]]), [[math.exp(-2)]], rtol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            cross_gram(Linear(), [[1.0, 2.0]], [[1.0]])


class TestRandomFeatures:
    def test_deterministic(self):
        a = build_feature_map("trig_gaussian", 3, 100, 42, [1.0])
        b = build_feature_map("trig_gaussian", 3, 100, 42, [1.0])
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.offsets.tobytes() == b.offsets.tobytes()
        c = build_feature_map("trig_gaussian", 3, 100, 43, [1.0])
        assert not np.array_equal(a.weights, c.weights)

    def test_unknown_family(self):
        with pytest.raises(ConfigError):
            build_feature_map("laplace", 2, 10, 0, [1.0])

    def test_bad_m_and_seed(self):
        with pytest.raises(ConfigError):
            build_feature_map("trig_gaussian", 2, 0, 0, [1.0])
        with pytest.raises(ConfigError):
            build_feature_map("trig_gaussian", 2, 10, -1, [1.0])

    def test_matches_gaussian_at_large_m(self):
        rng = np.random.default_rng(0)
        x, y = rng.uniform(size=(2, 200, 2))
        rf = RandomFeatures(1.0, 10000, seed=3)
        km = np.array([eval_kernel(rf, a, b) for a, b in zip(x, y)])
        k = np.array([direct_gaussian(a, b, 1.0) for a, b in zip(x, y)])
        assert np.median(np.abs(km - k)) < 0.05

    def test_diagonal_mean_near_one(self):
        m = 2000
        rng = np.random.default_rng(9)
        pts = rng.uniform(size=(300, 2))
        fmap = build_feature_map("trig_gaussian", 2, m, 5, [1.0])
        diag = (fmap.features(pts) ** 2).sum(axis=1) / m
        # E[2 cos^2] = 1; per-point std of the average is 1/sqrt(2M)
        assert abs(diag.mean() - 1.0) < 3 / math.sqrt(m)

    def test_psd_by_construction(self):
        pts = np.random.default_rng(4).normal(size=(40, 3))
        k = gram(RandomFeatures(2.0, 10), pts).entries  # rank <= 10
        assert np.linalg.eigvalsh(k).min() >= -1e-8 * np.trace(k) / 40


class TestSerialization:
    @pytest.mark.parametrize("spec", VARIANTS, ids=repr)
    def test_roundtrip(self, spec):
        d = kernel_to_dict(spec)
        back = kernel_from_dict(json.loads(json.dumps(d)))
        assert back == spec

    def test_large_seed_exact(self):
        spec = RandomFeatures(1.5, 12345, seed=2**64 - 1)
        back = kernel_from_dict(json.loads(json.dumps(kernel_to_dict(spec))))
        assert back.seed == 2**64 - 1 and back.m == 12345

    def test_full_precision_reals(self):
        g = 0.1 + 0.2
        assert kernel_from_dict(json.loads(json.dumps(kernel_to_dict(Gaussian(g))))).gamma == g

    def test_documented_shapes(self):
        assert kernel_to_dict(Gaussian(1.0)) == {"kind": "gaussian", "gamma": 1.0}
        assert kernel_to_dict(RandomFeatures(1.0, 10, 3)) == {
            "kind": "random_features", "family": "trig_gaussian", "gamma": 1.0, "m": 10, "seed": 3}

    @pytest.mark.parametrize("text,expected", [
        ("linear", Linear()),
        ("gaussian:1.0", Gaussian(1.0)),
        ("rf:2.0:100:5", RandomFeatures(2.0, 100, 5)),
        ('{"kind":"sum","left":{"kind":"linear"},"right":{"kind":"gaussian","gamma":3}}',
         Sum(Linear(), Gaussian(3.0))),
    ])
    def test_parse(self, text, expected):
        assert parse_kernel(text) == expected

    @pytest.mark.parametrize("text", ["poly:2", "gaussian:-1", "gaussian:x", "{bad json", '{"kind":"nope"}'])
    def test_parse_errors(self, text):
        with pytest.raises(ConfigError):
            parse_kernel(text)
