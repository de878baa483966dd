"""Linear and MLP model training, gradients, and persistence.

The finite-difference check is the independent oracle for every gradient:
loss_and_gradient exposes exactly the objective the trainers descend, so
central differences on each parameter must match the analytic gradient.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from codenoise.errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    InvalidConfig,
    LengthMismatch,
    ParseError,
    WidthMismatch,
)
from codenoise.models import (
    LinearModel,
    MlpModel,
    TrainConfig,
    derive_seed,
    fine_tune,
    load_model,
    loss_and_gradient,
    mlp_predict_batch,
    predict_class_probs_batch,
    predict_prob,
    predict_prob_batch,
    save_model,
    train_binary_lr,
    train_many_binary,
    train_mlp_br,
    train_multiclass_lr,
)

FD_H = 1e-5
FD_TOL = 1e-4


def random_problem(rng, n=12, d=7):
    X = sp.random(n, d, density=0.5, random_state=np.random.RandomState(rng.integers(1 << 31)))
    X = sp.csr_matrix(X)
    return X


def fd_rel_errors(model, X, labels, l2):
    """Max relative error between analytic and central-difference gradients."""
    loss, grads = loss_and_gradient(model, X, labels, l2_strength=l2)
    worst = 0.0
    for name, grad in grads.items():
        param = getattr(model, name)
        flat_param = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for j in range(flat_param.size):
            orig = flat_param[j]
            flat_param[j] = orig + FD_H
            up, _ = loss_and_gradient(model, X, labels, l2_strength=l2)
            flat_param[j] = orig - FD_H
            down, _ = loss_and_gradient(model, X, labels, l2_strength=l2)
            flat_param[j] = orig
            numeric = (up - down) / (2 * FD_H)
            denom = max(abs(numeric), abs(flat_grad[j]), 1e-8)
            worst = max(worst, abs(numeric - flat_grad[j]) / denom)
    return worst


def make_binary(rng, d=7):
    return LinearModel(
        weights=rng.normal(size=(1, d)) * 0.5,
        bias=rng.normal(size=1) * 0.1,
        meta={"family": "binary_lr"},
    )


def make_multiclass(rng, d=7, k=3):
    return LinearModel(
        weights=rng.normal(size=(k, d)) * 0.5,
        bias=rng.normal(size=k) * 0.1,
        meta={"family": "multiclass_lr"},
    )


def make_mlp(rng, d=7, h=5, m=3):
    return MlpModel(
        w_hidden=rng.normal(size=(d, h)) * 0.5,
        b_hidden=rng.normal(size=h) * 0.1,
        w_out=rng.normal(size=(h, m)) * 0.5,
        b_out=rng.normal(size=m) * 0.1,
        meta={"family": "mlp_br"},
    )


class TestGradients:
    @pytest.mark.parametrize("l2", [0.0, 0.01])
    def test_binary_fd(self, l2):
        rng = np.random.default_rng(0)
        X = random_problem(rng)
        y = rng.integers(0, 2, size=X.shape[0]).astype(np.float64)
        assert fd_rel_errors(make_binary(rng), X, y, l2) < FD_TOL

    @pytest.mark.parametrize("l2", [0.0, 0.01])
    def test_multiclass_fd(self, l2):
        rng = np.random.default_rng(1)
        X = random_problem(rng)
        y = rng.integers(0, 3, size=X.shape[0])
        assert fd_rel_errors(make_multiclass(rng), X, y, l2) < FD_TOL

    @pytest.mark.parametrize("l2", [0.0, 0.01])
    def test_mlp_fd(self, l2):
        rng = np.random.default_rng(2)
        X = random_problem(rng)
        Y = rng.integers(0, 2, size=(X.shape[0], 3)).astype(np.float64)
        model = make_mlp(rng)
        z1 = X @ model.w_hidden + model.b_hidden
        assert np.min(np.abs(z1)) > 1e-3
        assert fd_rel_errors(model, X, Y, 0.01) < FD_TOL

    def test_l2_excludes_bias(self):
        rng = np.random.default_rng(3)
        X = sp.csr_matrix(np.zeros((4, 3)))
        y = np.array([0.0, 1.0, 0.0, 1.0])
        model = LinearModel(
            weights=np.full((1, 3), 2.0), bias=np.zeros(1), meta={"family": "binary_lr"}
        )
        lam = 0.5
        _, grads = loss_and_gradient(model, X, y, l2_strength=lam)
        assert np.allclose(grads["weights"], lam * model.weights)
        assert np.allclose(grads["bias"], 0.0)


class TestBinaryTraining:
    def test_zero_model_predicts_half(self):
        rng = np.random.default_rng(0)
        X = random_problem(rng)
        y = rng.integers(0, 2, size=X.shape[0]).astype(np.float64)
        model = train_binary_lr(X, y, TrainConfig(epochs=0))
        probs = predict_prob_batch(model, X)
        assert np.allclose(probs, 0.5)

    def test_initial_loss_is_ln2(self):
        rng = np.random.default_rng(0)
        X = random_problem(rng)
        y = rng.integers(0, 2, size=X.shape[0]).astype(np.float64)
        model = train_binary_lr(X, y, TrainConfig(epochs=0))
        loss, _ = loss_and_gradient(model, X, y)
        assert math.isclose(loss, math.log(2.0), rel_tol=1e-12)

    def test_separable_convergence(self):
        X = sp.csr_matrix(np.array([[1.0, 0.0]] * 20 + [[0.0, 1.0]] * 20))
        y = np.array([1.0] * 20 + [0.0] * 20)
        model = train_binary_lr(X, y, TrainConfig(epochs=200, learning_rate=1.0))
        probs = predict_prob_batch(model, X)
        assert probs[:20].min() > 0.9
        assert probs[20:].max() < 0.1

    def test_full_batch_loss_never_increases(self):
        rng = np.random.default_rng(4)
        X = random_problem(rng, n=16)
        y = rng.integers(0, 2, size=16).astype(np.float64)
        losses = []
        for epochs in range(0, 12, 2):
            model = train_binary_lr(X, y, TrainConfig(
                learning_rate=0.05, epochs=epochs, batch_size=16, l2_strength=0.0
            ))
            losses.append(loss_and_gradient(model, X, y)[0])
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_bit_identical_reruns(self):
        rng = np.random.default_rng(5)
        X = random_problem(rng, n=30)
        y = rng.integers(0, 2, size=30).astype(np.float64)
        cfg = TrainConfig(epochs=8, batch_size=8, seed=3)
        a = train_binary_lr(X, y, cfg)
        b = train_binary_lr(X, y, cfg)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)

    def test_empty_or_mismatched_inputs(self):
        X = sp.csr_matrix(np.zeros((0, 3)))
        with pytest.raises(EmptyTrainingSet):
            train_binary_lr(X, np.zeros(0), TrainConfig())
        X2 = sp.csr_matrix(np.zeros((4, 3)))
        with pytest.raises(LengthMismatch):
            train_binary_lr(X2, np.zeros(3), TrainConfig())


class TestTrainManyBinary:
    def test_matches_per_target_schedule(self):
        rng = np.random.default_rng(6)
        X = random_problem(rng, n=40, d=9)
        ya = rng.integers(0, 2, size=40).astype(np.float64)
        yb = rng.integers(0, 2, size=40).astype(np.float64)
        cfg = TrainConfig(epochs=6, batch_size=16, seed=2)
        alone = train_many_binary(X, {"A01": ya}, cfg)["A01"]
        together = train_many_binary(X, {"A01": ya, "B02": yb}, cfg)["A01"]
        assert np.array_equal(alone.weights, together.weights)
        assert np.array_equal(alone.bias, together.bias)

    def test_meta_records_target(self):
        rng = np.random.default_rng(7)
        X = random_problem(rng, n=10)
        y = rng.integers(0, 2, size=10).astype(np.float64)
        models = train_many_binary(X, {"A01": y}, TrainConfig(epochs=1))
        assert models["A01"].meta["target"] == "A01"


class TestMulticlass:
    def test_out_of_range_labels_rejected(self):
        X = sp.csr_matrix(np.eye(4))
        with pytest.raises(InvalidConfig):
            train_multiclass_lr(X, np.array([0, 1, 2, 3]), TrainConfig(epochs=1), n_classes=3)

    def test_absent_class_warns(self):
        X = sp.csr_matrix(np.eye(4))
        with pytest.warns(UserWarning):
            train_multiclass_lr(X, np.array([0, 1, 1, 0]), TrainConfig(epochs=1), n_classes=3)

    def test_zero_model_uniform_probs(self):
        X = sp.csr_matrix(np.eye(3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = train_multiclass_lr(X, np.array([0, 1, 2]), TrainConfig(epochs=0))
        probs = predict_class_probs_batch(model, X)
        assert np.allclose(probs, 1.0 / 3.0)

    def test_learns_three_classes(self):
        X = sp.csr_matrix(np.repeat(np.eye(3), 10, axis=0))
        y = np.repeat(np.arange(3), 10)
        model = train_multiclass_lr(X, y, TrainConfig(epochs=300, learning_rate=1.0))
        probs = predict_class_probs_batch(model, X)
        assert (probs.argmax(axis=1) == y).all()


class TestMlp:
    def test_shapes_and_determinism(self):
        rng = np.random.default_rng(8)
        X = random_problem(rng, n=20, d=6)
        Y = rng.integers(0, 2, size=(20, 4)).astype(np.float64)
        cfg = TrainConfig(epochs=4, hidden_size=5, seed=11)
        a = train_mlp_br(X, Y, cfg)
        b = train_mlp_br(X, Y, cfg)
        assert a.w_hidden.shape == (6, 5)
        assert a.w_out.shape == (5, 4)
        assert np.array_equal(a.w_hidden, b.w_hidden)
        assert np.array_equal(a.w_out, b.w_out)
        probs = mlp_predict_batch(a, X)
        assert probs.shape == (20, 4)
        assert ((probs > 0) & (probs < 1)).all()

    def test_biases_start_zero(self):
        rng = np.random.default_rng(9)
        X = random_problem(rng, n=8, d=4)
        Y = rng.integers(0, 2, size=(8, 2)).astype(np.float64)
        model = train_mlp_br(X, Y, TrainConfig(epochs=0, hidden_size=3))
        assert np.allclose(model.b_hidden, 0.0)
        assert np.allclose(model.b_out, 0.0)
        bound_h = 1.0 / math.sqrt(4)
        bound_o = 1.0 / math.sqrt(3)
        assert np.abs(model.w_hidden).max() <= bound_h
        assert np.abs(model.w_out).max() <= bound_o


class TestFineTune:
    def test_fine_tune_zero_equals_fresh_training(self):
        rng = np.random.default_rng(10)
        X = random_problem(rng, n=24)
        y = rng.integers(0, 2, size=24).astype(np.float64)
        cfg = TrainConfig(epochs=7, batch_size=8, seed=4)
        zero = train_binary_lr(X, y, TrainConfig(epochs=0))
        tuned = fine_tune(zero, X, y, cfg)
        fresh = train_binary_lr(X, y, cfg)
        assert np.array_equal(tuned.weights, fresh.weights)
        assert np.array_equal(tuned.bias, fresh.bias)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(11)
        X = random_problem(rng, n=10, d=7)
        y = rng.integers(0, 2, size=10).astype(np.float64)
        model = train_binary_lr(X, y, TrainConfig(epochs=1))
        X_wrong = random_problem(rng, n=10, d=9)
        with pytest.raises(DimensionMismatch):
            fine_tune(model, X_wrong, y, TrainConfig(epochs=1))

    def test_does_not_mutate_source(self):
        rng = np.random.default_rng(12)
        X = random_problem(rng, n=10)
        y = rng.integers(0, 2, size=10).astype(np.float64)
        model = train_binary_lr(X, y, TrainConfig(epochs=2))
        before = model.weights.copy()
        fine_tune(model, X, y, TrainConfig(epochs=3))
        assert np.array_equal(model.weights, before)


class TestPredict:
    def test_predict_prob_single(self):
        model = LinearModel(
            weights=np.array([[1.0, -1.0]]), bias=np.array([0.0]), meta={"family": "binary_lr"}
        )
        vec = sp.csr_matrix(np.array([[1.0, 0.0]]))
        assert math.isclose(predict_prob(model, vec), 1.0 / (1.0 + math.exp(-1.0)))

    def test_width_mismatch_on_multiclass(self):
        model = LinearModel(
            weights=np.zeros((3, 2)), bias=np.zeros(3), meta={"family": "multiclass_lr"}
        )
        X = sp.csr_matrix(np.zeros((2, 2)))
        with pytest.raises(WidthMismatch):
            predict_prob_batch(model, X)


class TestPersistence:
    def test_linear_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        X = random_problem(rng, n=10)
        y = rng.integers(0, 2, size=10).astype(np.float64)
        model = train_binary_lr(X, y, TrainConfig(epochs=3))
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert isinstance(loaded, LinearModel)
        assert np.array_equal(loaded.weights, model.weights)
        assert np.array_equal(loaded.bias, model.bias)
        assert loaded.meta == model.meta

    def test_mlp_round_trip(self, tmp_path):
        rng = np.random.default_rng(14)
        X = random_problem(rng, n=10, d=4)
        Y = rng.integers(0, 2, size=(10, 2)).astype(np.float64)
        model = train_mlp_br(X, Y, TrainConfig(epochs=2, hidden_size=3))
        path = tmp_path / "mlp.json"
        save_model(model, path)
        loaded = load_model(path)
        assert isinstance(loaded, MlpModel)
        assert np.array_equal(loaded.w_hidden, model.w_hidden)
        assert np.array_equal(loaded.w_out, model.w_out)

    def test_bad_version_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format_version": 99, "family": "binary_lr"}', encoding="utf-8")
        with pytest.raises(ParseError):
            load_model(path)


class TestDeriveSeed:
    def test_stable_and_bounded(self):
        a = derive_seed(0, "M54.5")
        assert a == derive_seed(0, "M54.5")
        assert 0 <= a < 1 << 31
        assert derive_seed(0, "M54.5") != derive_seed(0, "M54.6")
        assert derive_seed(1, "M54.5") != derive_seed(0, "M54.5")


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": 0.0},
            {"learning_rate": -1.0},
            {"epochs": -1},
            {"l2_strength": -0.1},
            {"batch_size": 0},
            {"hidden_size": 0},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(InvalidConfig):
            TrainConfig(**kwargs).validate()
