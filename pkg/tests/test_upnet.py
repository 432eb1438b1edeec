import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from catscreen import upnet
from catscreen.data import Atom, AtomicStructure
from catscreen.errors import HeadMismatchError, ShapeMismatchError, TooManyAtomsError, UnknownElementError
from catscreen.upnet import (
    ModelConfig,
    PointCloudBatch,
    decode,
    encode,
    fit,
    forward_features,
    init_model,
    loss_and_gradients,
    mean_field_softmax,
    power_iteration,
    predict_class,
    predict_regression,
    rff_embed,
    spectral_normalize,
)

from conftest import random_batch, small_config


def _regression_targets(batch):
    return np.array([np.sin(m[k].sum()) for m, k in zip(batch.matrix, batch.mask)])


def _class_targets(batch):
    return np.array([int(m[k][:, 0].max() > 0.5) for m, k in zip(batch.matrix, batch.mask)])


@pytest.fixture(scope="module")
def reg_model():
    batch = random_batch(40, seed=1)
    return fit(batch, _regression_targets(batch), small_config(epochs=5)), batch


@pytest.fixture(scope="module")
def cls_model():
    batch = random_batch(40, seed=2)
    y = _class_targets(batch)
    assert 0 < y.sum() < len(y)
    return fit(batch, y, small_config("classification", epochs=5)), batch


class TestEncoding:
    def test_row_values(self, alcu_schema):
        s = AtomicStructure("t", "AlCu", (Atom("Cu", 1.0, 2.0, 3.0), Atom("Al", -1.0, 0.5, 0.0)), 0.0, 0.0)
        t = encode(s, alcu_schema)
        cu = alcu_schema.element_properties["Cu"]
        np.testing.assert_array_equal(t.matrix[0], [0, 1, cu.mass, cu.electronegativity, cu.radius, 1, 2, 3])
        assert t.mask.tolist() == [True, True] + [False] * 14
        assert not t.matrix[2:].any()

    def test_decode_recovers_atoms(self, alcu_dataset, alcu_schema):
        for s in alcu_dataset:
            got = decode(encode(s, alcu_schema), alcu_schema)
            assert got == [(a.el, a.x, a.y, a.z) for a in s.atoms]

    def test_too_many_atoms(self, alcu_schema):
        s = AtomicStructure("t", "Cu", tuple(Atom("Cu", float(i), 0.0, 0.0) for i in range(17)), 0.0, 0.0)
        with pytest.raises(TooManyAtomsError):
            encode(s, alcu_schema)

    def test_unknown_element(self, alcu_schema):
        s = AtomicStructure("t", "Pt", (Atom("Pt", 0.0, 0.0, 0.0),), 0.0, 0.0)
        with pytest.raises(UnknownElementError):
            encode(s, alcu_schema)

    def test_mask_shape_checked(self):
        with pytest.raises(ShapeMismatchError):
            PointCloudBatch(np.zeros((2, 3, 4)), np.ones((2, 4), dtype=bool))


class TestSpectralNormalization:
    def test_diagonal_rescaled(self):
        W, _ = spectral_normalize(np.diag([2.0, 0.5]), 0.95)
        np.testing.assert_allclose(W, np.diag([0.95, 0.2375]), atol=1e-10)

    def test_below_bound_untouched(self):
        W = np.diag([0.5, 0.1])
        out, _ = spectral_normalize(W, 0.95)
        assert out is W

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_svd(self, seed):
        W = np.random.default_rng(seed).normal(size=(64, 45))
        out, _ = spectral_normalize(W, 0.95, n_iter=100)
        assert abs(np.linalg.svd(out, compute_uv=False)[0] - 0.95) < 1e-3

    def test_power_iteration_converges_with_persisted_vector(self):
        W = np.random.default_rng(0).normal(size=(20, 10))
        u = None
        for _ in range(200):
            sigma, u = power_iteration(W, u, 1)
        assert sigma == pytest.approx(np.linalg.norm(W, 2), rel=1e-8)

    def test_trained_blocks_respect_bound(self, reg_model):
        model, _ = reg_model
        for W in model.block_weights():
            assert np.linalg.norm(W, 2) <= 0.95 + 1e-9


class TestForward:
    def test_single_atom_reference(self):
        cfg = small_config(n_blocks=3, hidden_width=4, rff_dim=8)
        model = init_model(5, cfg, np.random.default_rng(4))
        model.input_mean = np.arange(5.0)
        model.input_std = np.full(5, 2.0)
        model.latent_scale = 1.7
        x = np.array([1.0, -2.0, 0.5, 3.0, 0.0])
        batch = PointCloudBatch(np.vstack([x, np.zeros((2, 5))])[None], np.array([[True, False, False]]))

        h = np.maximum(model.params["W0"] @ ((x - model.input_mean) / 2.0) + model.params["b0"], 0)
        for l in (1, 2):
            h = np.maximum(model.params[f"W{l}"] @ h + model.params[f"b{l}"], 0) + h
        phi = np.array([
            math.sqrt(2 / 8) * math.cos(cfg.rff_scale * model.rff_weight[d] @ (h / 1.7) + model.rff_bias[d])
            for d in range(8)
        ])
        lat = forward_features(batch, model)
        np.testing.assert_allclose(lat[0], h, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(rff_embed(lat, model)[0], phi, rtol=1e-12, atol=1e-14)

    def test_row_permutation_invariance(self, reg_model):
        model, batch = reg_model
        rng = np.random.default_rng(0)
        matrix = batch.matrix.copy()
        for i in range(len(batch)):
            k = batch.mask[i].sum()
            matrix[i, :k] = matrix[i, rng.permutation(k)]
        a = predict_regression(batch, model)
        b = predict_regression(PointCloudBatch(matrix, batch.mask), model)
        np.testing.assert_allclose(b.mean, a.mean, rtol=1e-12)
        np.testing.assert_allclose(b.variance, a.variance, rtol=1e-10)

    def test_duplicate_row_leaves_latent_unchanged(self, reg_model):
        model, batch = reg_model
        i = int(np.argmin(batch.mask.sum(axis=1)))
        m, k = batch.matrix[i].copy(), batch.mask[i].copy()
        j = int(k.sum())
        m[j] = m[0]
        k[j] = True
        np.testing.assert_allclose(forward_features(upnet.PointCloudTensor(m, k), model),
                                   forward_features(batch.tensor(i), model), rtol=1e-12)

    def test_padding_contents_ignored(self, reg_model):
        model, batch = reg_model
        noisy = batch.matrix.copy()
        noisy[~batch.mask] = np.random.default_rng(1).normal(size=(int((~batch.mask).sum()), batch.feature_width)) * 1e3
        a = predict_regression(batch, model)
        b = predict_regression(PointCloudBatch(noisy, batch.mask), model)
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.variance, b.variance)

    def test_width_mismatch(self, reg_model):
        model, _ = reg_model
        with pytest.raises(ShapeMismatchError):
            forward_features(random_batch(2, width=7), model)


class TestRandomFeatures:
    def test_bounded_and_deterministic(self):
        cfg = small_config(rff_dim=256)
        m1 = init_model(5, cfg, np.random.default_rng(0))
        m2 = init_model(5, cfg, np.random.default_rng(0))
        z = np.random.default_rng(1).normal(size=(30, 16)) * 10
        phi = rff_embed(z, m1)
        assert np.all(np.abs(phi) <= math.sqrt(2 / 256) + 1e-15)
        np.testing.assert_array_equal(phi, rff_embed(z, m2))

    def test_inner_products_approximate_gaussian_kernel(self):
        cfg = small_config(rff_dim=4096, rff_scale=1.0)
        model = init_model(5, cfg, np.random.default_rng(0))
        rng = np.random.default_rng(2)
        z1, z2 = rng.normal(size=(20, 16)) * 0.2, rng.normal(size=(20, 16)) * 0.2
        approx = np.sum(rff_embed(z1, model) * rff_embed(z2, model), axis=1)
        exact = np.exp(-0.5 * np.sum((z1 - z2) ** 2, axis=1))
        assert np.max(np.abs(approx - exact)) < 0.05


class TestGradients:
    @pytest.mark.parametrize("head", ["regression", "classification"])
    @pytest.mark.parametrize("shortcut", [False, True])
    def test_finite_differences(self, head, shortcut):
        cfg = small_config(head, n_blocks=2, hidden_width=4, rff_dim=8, input_shortcut=shortcut)
        batch = random_batch(6, width=3, max_rows=4, seed=5)
        model = init_model(3, cfg, np.random.default_rng(1))
        model.params["beta"] = np.random.default_rng(2).normal(size=model.params["beta"].shape)
        for k in model.params:
            if k.startswith("b") and k != "beta":
                model.params[k] = np.full_like(model.params[k], 0.1)
        y = _regression_targets(batch) if head == "regression" else _class_targets(batch)
        _, grads = loss_and_gradients(model, batch, y, n_total=10)
        eps = 1e-6
        for name, g in grads.items():
            num = np.zeros_like(g)
            p = model.params[name]
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + eps
                lp, _ = loss_and_gradients(model, batch, y, n_total=10)
                p[idx] = old - eps
                lm, _ = loss_and_gradients(model, batch, y, n_total=10)
                p[idx] = old
                num[idx] = (lp - lm) / (2 * eps)
            rel = np.linalg.norm(g - num) / max(np.linalg.norm(g), np.linalg.norm(num), 1e-12)
            assert rel < 1e-4, name


class TestFit:
    def test_constant_target(self):
        batch = random_batch(20, seed=3)
        model = fit(batch, np.full(20, 0.42), small_config())
        pred = predict_regression(random_batch(10, seed=9), model)
        np.testing.assert_allclose(pred.mean, 0.42, atol=0.05)

    def test_same_seed_bit_identical(self):
        batch = random_batch(20, seed=3)
        y = _regression_targets(batch)
        a = fit(batch, y, small_config(seed=7))
        b = fit(batch, y, small_config(seed=7))
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])
        np.testing.assert_array_equal(a.precision, b.precision)

    def test_different_seed_differs(self):
        batch = random_batch(20, seed=3)
        y = _regression_targets(batch)
        a = fit(batch, y, small_config(seed=1))
        b = fit(batch, y, small_config(seed=2))
        assert not np.array_equal(a.params["W0"], b.params["W0"])

    def test_needs_two_samples(self):
        with pytest.raises(Exception):
            fit(random_batch(1), [0.1], small_config())

    def test_rejects_bad_class_labels(self):
        with pytest.raises(ValueError):
            fit(random_batch(4), [0, 1, 2, 1], small_config("classification"))

    def test_warm_start_changes_initialization(self):
        batch = random_batch(20, seed=3)
        y = _regression_targets(batch)
        first = fit(batch, y, small_config(epochs=1))
        again = fit(batch, y, small_config(epochs=1), init=first)
        cold = fit(batch, y, small_config(epochs=1))
        assert not np.array_equal(again.params["W1"], cold.params["W1"])

    def test_training_reduces_loss(self):
        batch = random_batch(40, seed=4)
        y = _regression_targets(batch)
        before = fit(batch, y, small_config(epochs=1, learning_rate=1e-9))
        after = fit(batch, y, small_config(epochs=60, learning_rate=3e-3))
        err_b = np.mean((predict_regression(batch, before).mean - y) ** 2)
        err_a = np.mean((predict_regression(batch, after).mean - y) ** 2)
        assert err_a < err_b


class TestPosterior:
    def test_variance_non_negative(self, reg_model, cls_model):
        far = random_batch(30, seed=11)
        far.matrix[far.mask] *= 50
        for model, _ in (reg_model, cls_model):
            assert np.all(upnet.predict(far, model).variance >= 0)

    def test_solve_matches_explicit_inverse(self, reg_model):
        model, batch = reg_model
        phi = rff_embed(forward_features(batch, model), model)
        explicit = np.einsum("nd,de,ne->n", phi, np.linalg.inv(model.precision), phi)
        got = predict_regression(batch, model).variance / model.target_std**2
        np.testing.assert_allclose(got, explicit, rtol=1e-8, atol=1e-12)

    @pytest.mark.parametrize("which", ["reg", "cls"])
    def test_precision_symmetric_and_bounded_below(self, which, reg_model, cls_model):
        model = (reg_model if which == "reg" else cls_model)[0]
        P = model.precision
        np.testing.assert_array_equal(P, P.T)
        assert np.linalg.eigvalsh(P).min() >= model.config.ridge_prior * (1 - 1e-9)

    def test_far_inputs_more_uncertain(self, reg_model):
        model, batch = reg_model
        far = random_batch(30, seed=12)
        far.matrix[far.mask] *= 30
        assert np.median(predict_regression(far, model).std) > np.median(predict_regression(batch, model).std)

    def test_noise_floor(self):
        batch = random_batch(20, seed=3)
        model = fit(batch, np.zeros(20), small_config())
        assert model.noise_variance == pytest.approx(1e-4)
        pred = predict_regression(batch, model, include_noise=True)
        np.testing.assert_allclose(pred.variance - predict_regression(batch, model).variance, 1e-4)

    def test_classifier_separates_training_data(self, cls_model):
        model, batch = cls_model
        p = predict_class(batch, model).probability
        np.testing.assert_allclose(p.sum(axis=1), 1.0)
        assert np.mean((p[:, 1] > 0.5) == _class_targets(batch)) >= 0.8


class TestMeanFieldSoftmax:
    def test_zero_variance_is_softmax(self):
        mu = np.random.default_rng(0).normal(size=(10, 2)) * 3
        ref = np.exp(mu) / np.exp(mu).sum(axis=1, keepdims=True)
        np.testing.assert_allclose(mean_field_softmax(mu, np.zeros_like(mu)), ref, rtol=1e-14)

    def test_large_variance_flattens(self):
        p = mean_field_softmax(np.array([4.0, -4.0]), np.array([1e8, 1e8]))
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-3)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0, 1e4))
    def test_valid_distribution(self, a, b, v):
        p = mean_field_softmax(np.array([a, b]), np.array([v, v]))
        assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)
        # variance only shrinks confidence
        p0 = mean_field_softmax(np.array([a, b]), np.zeros(2))
        assert np.max(p) <= np.max(p0) + 1e-12


class TestHeadsAndCheckpoints:
    def test_head_mismatch(self, reg_model, cls_model):
        with pytest.raises(HeadMismatchError):
            predict_class(reg_model[1], reg_model[0])
        with pytest.raises(HeadMismatchError):
            predict_regression(cls_model[1], cls_model[0])

    @pytest.mark.parametrize("which", ["reg", "cls"])
    def test_round_trip(self, which, reg_model, cls_model, tmp_path):
        model, batch = reg_model if which == "reg" else cls_model
        upnet.save_model(model, tmp_path / "m.npz")
        loaded = upnet.load_model(tmp_path / "m.npz")
        a, b = upnet.predict(batch, model), upnet.predict(batch, loaded)
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.variance, b.variance)
        assert loaded.config == model.config

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(head="ranking")
        with pytest.raises(ValueError):
            ModelConfig(rff_dim=8, hidden_width=64)
        assert ModelConfig().resolved_epochs == 500
        assert ModelConfig(head="classification").resolved_epochs == 300
