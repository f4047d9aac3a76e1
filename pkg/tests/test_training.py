import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphereaug.errors import ConfigError, EmptyTestSet, NoPositivePairs, NoValidTriplets, ZeroNorm
from sphereaug.geometry import rodrigues_rotation, schmidt_pair
from sphereaug.scheduler import SchedulerConfig, balanced_augment
from sphereaug.stats import ClassCenters
from sphereaug.training import (EmbeddingModel, TrainConfig, TripletLossSpec, evaluate, forward,
                                loss_and_grad, recall_at_1, train, triplet_loss)


def fd_check(kind, seed=0, lam=0.7, margin=0.5, d_in=8, d_out=4, h=1e-5):
    """Max relative error between analytic and central-difference weight gradients."""
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((12, d_in))
    y = np.repeat([0, 1], 6)
    m = EmbeddingModel(rng.standard_normal((d_out, d_in)), rng.standard_normal(d_out))
    X = m.forward(U)
    cen = ClassCenters.from_means(X + 0.05 * rng.standard_normal(X.shape), y)
    b = balanced_augment(X, y, cen, kind, SchedulerConfig(lam=lam, rng_seed=3))
    spec = TripletLossSpec(margin)
    res = loss_and_grad(m, U, y, lam, spec, b.plan, b.y_gen)
    num = np.zeros_like(m.weight)
    for idx in np.ndindex(*m.weight.shape):
        for sgn in (1, -1):
            m2 = m.copy()
            m2.weight[idx] += sgn * h
            num[idx] += sgn * loss_and_grad(m2, U, y, lam, spec, b.plan, b.y_gen).combined / (2 * h)
    rel = np.abs(num - res.grad_weight) / np.maximum(np.maximum(abs(num), abs(res.grad_weight)), 1e-8)
    return rel.max(), res


class TestForward:
    def test_identity_embeds_unit_rows(self):
        m = EmbeddingModel(np.eye(3))
        np.testing.assert_allclose(forward(m, [[3.0, 4.0, 0.0]]), [[0.6, 0.8, 0.0]])

    def test_zero_preactivation(self):
        with pytest.raises(ZeroNorm):
            EmbeddingModel(np.eye(2)).forward([[0.0, 0.0]])

    def test_json_roundtrip(self, rng):
        m = EmbeddingModel(rng.standard_normal((2, 3)), rng.standard_normal(2))
        m2 = EmbeddingModel.from_json(m.to_json())
        np.testing.assert_array_equal(m.weight, m2.weight)
        np.testing.assert_array_equal(m.bias, m2.bias)


class TestTriplet:
    def test_coincident_points_give_margin(self):
        E = np.array([[1.0, 0.0]] * 4)
        loss, grad, n = triplet_loss(E, [0, 0, 1, 1], TripletLossSpec(0.1))
        assert loss == pytest.approx(0.1)
        assert n == 8

    def test_separated_classes_zero(self):
        E = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]])
        loss, grad, n = triplet_loss(E, [0, 0, 1, 1])
        assert loss == 0.0 and n == 0
        assert not grad.any()

    def test_no_valid_triplet(self):
        with pytest.raises(NoValidTriplets):
            triplet_loss(np.eye(2), [0, 1])
        with pytest.raises(NoValidTriplets):
            triplet_loss(np.eye(2), [0, 0])

    def test_bad_margin(self):
        with pytest.raises(ConfigError):
            TripletLossSpec(-0.1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 10), st.integers(0, 2**32 - 1))
    def test_loss_rotation_invariant(self, d, seed):
        r = np.random.default_rng(seed)
        E = r.standard_normal((10, d))
        E /= np.linalg.norm(E, axis=1)[:, None]
        y = r.integers(0, 3, 10)
        y[:2] = 0
        y[2] = 1
        A = rodrigues_rotation(schmidt_pair(r.standard_normal(d), r.standard_normal(d)))
        l1 = triplet_loss(E, y, TripletLossSpec(0.5))[0]
        l2 = triplet_loss(E @ A.T, y, TripletLossSpec(0.5))[0]
        assert abs(l1 - l2) < 1e-12


class TestGradient:
    @pytest.mark.parametrize("kind", ["sft", "sft_d", "translation"])
    def test_matches_finite_differences(self, kind):
        err, res = fd_check(kind)
        assert res.active_orig > 0 and res.active_gen > 0
        assert err < 1e-4

    def test_gradient_tangent_to_sphere(self, rng):
        # Pre-activation gradient is orthogonal to each embedding, so scaling W leaves the loss flat.
        U = rng.standard_normal((10, 5))
        y = np.repeat([0, 1], 5)
        m = EmbeddingModel(rng.standard_normal((3, 5)))
        res = loss_and_grad(m, U, y, 0.0, TripletLossSpec(0.5))
        assert abs(np.sum(res.grad_weight * m.weight)) < 1e-12


class TestTraining:
    def _data(self, rng, n_classes=6, per=10, d=5):
        means = rng.standard_normal((n_classes, d)) * 2
        U = np.repeat(means, per, axis=0) + rng.standard_normal((n_classes * per, d))
        return U, np.repeat(np.arange(n_classes), per)

    def test_lambda_zero_matches_baseline_bitwise(self, rng):
        U, y = self._data(rng)
        base = dict(iterations=25, classes_per_batch=4, d_out=4, seed=5)
        s0, _ = train(TrainConfig(kind="none", **base), U, y)
        for kind in ("sft", "sft_d", "translation"):
            s1, hist = train(TrainConfig(kind=kind, lam=0.0, **base), U, y)
            assert any(h["n_generated"] for h in hist)
            assert s1.model.weight.tobytes() == s0.model.weight.tobytes()

    def test_nonzero_lambda_changes_weights(self, rng):
        U, y = self._data(rng)
        base = dict(iterations=25, classes_per_batch=4, d_out=4, seed=5)
        s0, _ = train(TrainConfig(kind="none", **base), U, y)
        s1, _ = train(TrainConfig(kind="sft", lam=1.0, **base), U, y)
        assert not np.array_equal(s0.model.weight, s1.model.weight)

    def test_deterministic(self, rng):
        U, y = self._data(rng)
        cfg = TrainConfig(iterations=15, classes_per_batch=3, d_out=3, seed=1, momentum=0.9, bias=True)
        a, ha = train(cfg, U, y)
        b, hb = train(cfg, U, y)
        assert a.model.weight.tobytes() == b.model.weight.tobytes()
        assert ha == hb

    def test_loss_decreases(self, rng):
        U, y = self._data(rng)
        _, hist = train(TrainConfig(kind="none", iterations=150, classes_per_batch=6, d_out=4), U, y)
        assert np.mean([h["loss_orig"] for h in hist[-20:]]) < np.mean([h["loss_orig"] for h in hist[:20]])

    def test_config_roundtrip_and_validation(self):
        cfg = TrainConfig(kind="translation", lam=0.4, seed=3)
        doc = cfg.to_json()
        assert doc["lambda"] == 0.4
        assert TrainConfig.from_json(doc) == cfg
        with pytest.raises(ConfigError):
            TrainConfig.from_json({"bogus": 1})
        with pytest.raises(ConfigError):
            TrainConfig(kind="mixup")


class TestEvaluate:
    def test_perfect_separation(self):
        U = np.array([[1.0, 0], [1.0, 0.01], [0, 1.0], [0.01, 1.0]])
        ev = evaluate(EmbeddingModel(np.eye(2)), U, [0, 0, 1, 1], class_counts={0: 50, 1: 2})
        assert ev["recall_at_1"] == 1.0 and ev["accuracy"] == 1.0
        assert ev["head_acc"] == 1.0 and ev["tail_acc"] == 1.0
        assert set(ev["per_class_divergence"]) == {"0", "1"}

    def test_random_embeddings_recall_near_chance(self):
        rng = np.random.default_rng(0)
        E = rng.standard_normal((2000, 16))
        E /= np.linalg.norm(E, axis=1)[:, None]
        y = rng.integers(0, 10, 2000)
        assert abs(recall_at_1(E, y) - 0.1) < 0.03

    def test_no_positive_pairs(self):
        with pytest.raises(NoPositivePairs):
            recall_at_1(np.eye(3), [0, 1, 2])

    def test_empty(self):
        with pytest.raises(EmptyTestSet):
            evaluate(EmbeddingModel(np.eye(2)), np.zeros((0, 2)), [])
