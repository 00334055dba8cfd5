import numpy as np
import pytest

from l0attack import autograd as ag
from l0attack import models
from l0attack.models import Model, ModelError, TrainConfig
from oracles import central_difference, relative_error


def test_logistic_parameter_count():
    assert models.build("logistic", 4, 2, seed=7).parameter_count == 10


def test_mlp_parameter_count():
    assert models.build("mlp", 16, 2, seed=0, hidden=32).parameter_count == 610


@pytest.mark.parametrize("arch", ["logistic", "mlp", "cnn1d"])
def test_build_is_deterministic(arch):
    a = models.build(arch, 16, 3, seed=5)
    b = models.build(arch, 16, 3, seed=5)
    for name in a.params:
        assert np.array_equal(a.params[name], b.params[name])


def test_glorot_bounds():
    m = models.build("mlp", 16, 2, seed=0, hidden=8)
    assert np.max(np.abs(m.params["w1"])) <= np.sqrt(6 / (16 + 8))


def test_cnn_needs_long_enough_input():
    with pytest.raises(ModelError):
        models.build("cnn1d", 7, 2)
    models.build("cnn1d", 8, 2)


def test_zero_logistic_predicts_class_zero():
    m = Model("logistic", 3, 2, {"w": np.zeros((2, 3)), "b": np.zeros(2)})
    np.testing.assert_array_equal(models.predict(m, [5.0, -1.0, 2.0]), [0.0, 0.0])
    assert models.predict_class(m, [5.0, -1.0, 2.0]) == 0


def test_identity_logistic():
    m = Model("logistic", 2, 2, {"w": np.eye(2), "b": np.zeros(2)})
    np.testing.assert_array_equal(models.predict(m, [2.0, 1.0]), [2.0, 1.0])
    assert models.predict_class(m, [2.0, 1.0]) == 0


def test_predict_length_mismatch():
    m = models.build("mlp", 8, 2)
    with pytest.raises(ModelError):
        models.predict(m, np.zeros(7))


def test_predict_non_finite_activation():
    m = Model("logistic", 2, 2, {"w": np.full((2, 2), 1e308), "b": np.zeros(2)})
    with pytest.raises(ag.NonFiniteError):
        models.predict(m, [1e308, 1e308])


@pytest.mark.parametrize("arch", ["logistic", "mlp", "cnn1d"])
def test_predict_is_pure(arch):
    m = models.build(arch, 12, 3, seed=2)
    x = np.random.default_rng(0).normal(size=12)
    assert np.array_equal(models.predict(m, x), models.predict(m, x))
    assert models.predict(m, x).shape == (3,)


@pytest.mark.parametrize("arch", ["logistic", "mlp", "cnn1d"])
def test_training_gradients_match_finite_differences(arch):
    rng = np.random.default_rng(11)
    m = models.build(arch, 10, 3, seed=4, hidden=6)
    X = rng.normal(size=(5, 10))
    y = np.array([0, 1, 2, 1, 0])
    _, grads = models.loss_and_grads(m, X, y)
    for name, value in m.params.items():
        def f(v, name=name):
            params = dict(m.params)
            params[name] = v
            return models.loss_and_grads(m, X, y, params)[0]
        assert relative_error(grads[name], central_difference(f, value)) < 1e-4, name


def test_zero_learning_rate_leaves_parameters():
    m = models.build("mlp", 6, 2, seed=0)
    X = np.random.default_rng(0).normal(size=(10, 6))
    y = np.arange(10) % 2
    out = models.train(m, X, y, TrainConfig(optimizer="sgd", learning_rate=0.0, epochs=1)).model
    for name in m.params:
        assert np.array_equal(out.params[name], m.params[name])


def test_separable_toy_set_reaches_full_accuracy():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(-2, 0.5, size=(20, 3)), rng.normal(2, 0.5, size=(20, 3))])
    y = np.repeat([0, 1], 20)
    out = models.train(models.build("logistic", 3, 2, seed=0), X, y, TrainConfig(epochs=200))
    assert models.accuracy(out.model, X, y) == 1.0
    assert len(out.loss_curve) == 200
    assert out.loss_curve[-1] <= out.initial_loss


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_full_batch_sgd_on_logistic_is_monotone(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 4))
    y = (X @ rng.normal(size=4) + 0.3 * rng.normal(size=30) > 0).astype(int)
    cfg = TrainConfig(optimizer="sgd", learning_rate=0.1, epochs=50, batch_size=30, seed=seed)
    curve = models.train(models.build("logistic", 4, 2, seed=seed), X, y, cfg).loss_curve
    assert all(b <= a for a, b in zip(curve, curve[1:]))


def test_training_is_deterministic():
    X = np.random.default_rng(0).normal(size=(12, 8))
    y = np.arange(12) % 2
    cfg = TrainConfig(epochs=5, batch_size=4, seed=3)
    a = models.train(models.build("cnn1d", 8, 2, seed=1), X, y, cfg)
    b = models.train(models.build("cnn1d", 8, 2, seed=1), X, y, cfg)
    assert a.loss_curve == b.loss_curve
    for name in a.model.params:
        assert np.array_equal(a.model.params[name], b.model.params[name])


def test_train_rejects_bad_inputs():
    m = models.build("logistic", 3, 2)
    with pytest.raises(ModelError):
        models.train(m, np.zeros((0, 3)), np.zeros(0, dtype=int), TrainConfig())
    with pytest.raises(ModelError):
        models.train(m, np.zeros((2, 3)), np.array([0, 2]), TrainConfig())


@pytest.mark.parametrize("kwargs", [{"learning_rate": -1.0}, {"epochs": 0}, {"batch_size": 0},
                                    {"optimizer": "rmsprop"}])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_synthetic_mlp_accuracy(synthetic, trained_mlp):
    assert models.accuracy(trained_mlp, *synthetic.test_arrays) >= 0.95


@pytest.mark.parametrize("arch", ["logistic", "mlp", "cnn1d"])
def test_save_load_round_trip(tmp_path, arch):
    m = models.build(arch, 12, 3, seed=9, hidden=5)
    path = tmp_path / "m.model"
    models.save(m, path)
    loaded = models.load(path)
    x = np.random.default_rng(1).normal(size=12)
    assert np.array_equal(models.predict(m, x), models.predict(loaded, x))
    assert loaded.hidden == 5


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.model"
    path.write_bytes(b"not a model")
    with pytest.raises(ModelError):
        models.load(path)
    m = models.build("logistic", 3, 2)
    models.save(m, path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ModelError):
        models.load(path)
