"""Feed-forward and LSTM regressors: gradients, training, serialization."""

import numpy as np
import pytest

from breakoutcast.errors import ContractError
from breakoutcast.mlmodels.neural import LstmRegressor, MlnnRegressor
from breakoutcast.preprocess import SupervisedDataset
from tests.conftest import make_dataset


def numeric_gradient(model, dataset, eps=1e-6):
    base = model.params_vector().copy()
    fd = np.zeros_like(base)
    for i in range(base.shape[0]):
        for sign in (1.0, -1.0):
            probe = base.copy()
            probe[i] += sign * eps
            model.set_params_vector(probe)
            loss, _ = model.loss_and_gradients(dataset)
            fd[i] += sign * loss
    fd /= 2.0 * eps
    model.set_params_vector(base)
    return fd


def gradient_error(model, dataset):
    _, grads = model.loss_and_gradients(dataset)
    fd = numeric_gradient(model, dataset)
    return np.linalg.norm(grads - fd) / max(np.linalg.norm(grads),
                                            np.linalg.norm(fd))


def small_dataset(n=4, window=5, seed=0):
    rng = np.random.default_rng(seed)
    social = rng.uniform(0, 10, size=(n, window))
    broadcast = rng.uniform(0, 2, size=(n, window))
    targets = rng.uniform(0, 10, size=n)
    return make_dataset(social, targets, broadcast_rows=broadcast,
                        normalized=True)


class TestGradients:
    def test_mlnn_analytic_gradient_matches_finite_differences(self):
        dataset = small_dataset(n=3, window=6, seed=1)
        model = MlnnRegressor(hidden_sizes=(4, 3), epochs=2,
                              learning_rate=1e-3, seed=2).fit(dataset)
        assert gradient_error(model, dataset) < 1e-4

    def test_lstm_analytic_gradient_matches_finite_differences(self):
        dataset = small_dataset(n=4, window=5, seed=3)
        model = LstmRegressor(hidden_size=4, epochs=2,
                              learning_rate=1e-3, seed=4).fit(dataset)
        assert gradient_error(model, dataset) < 1e-4


class TestTraining:
    def test_mlnn_learns_linear_relationship(self):
        rng = np.random.default_rng(0)
        X = rng.normal(0, 0.3, size=(200, 12))
        train = make_dataset(X, 2.0 * X[:, 1], normalized=True)
        Xt = rng.normal(0, 0.3, size=(100, 12))
        yt = 2.0 * Xt[:, 1]
        test = make_dataset(Xt, yt)
        model = MlnnRegressor(hidden_sizes=(32,), epochs=2000,
                              learning_rate=1e-2, batch_size=16,
                              seed=0).fit(train)
        mse = float(np.mean((model.predict(test.samples) - yt) ** 2))
        assert mse < 1e-3

    def test_lstm_learns_to_copy_last_value(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, size=(500, 12))
        train = make_dataset(X, X[:, -1], normalized=True)
        Xt = rng.uniform(0, 1, size=(200, 12))
        test = make_dataset(Xt, Xt[:, -1])
        model = LstmRegressor(hidden_size=16, epochs=200,
                              learning_rate=1e-2, seed=0).fit(train)
        mae = float(np.mean(np.abs(model.predict(test.samples) - Xt[:, -1])))
        assert mae < 0.05

    def test_same_seed_training_is_bitwise_reproducible(self):
        dataset = small_dataset(n=20, seed=5)
        for cls, kwargs in ((MlnnRegressor, {"hidden_sizes": (8,)}),
                            (LstmRegressor, {"hidden_size": 6})):
            a = cls(epochs=5, seed=9, **kwargs).fit(dataset)
            b = cls(epochs=5, seed=9, **kwargs).fit(dataset)
            assert np.array_equal(a.params_vector(), b.params_vector())


class TestContracts:
    def test_zeroed_network_outputs_denormalized_output_bias(self):
        dataset = small_dataset(n=6, seed=6)
        for cls, kwargs, bias in ((MlnnRegressor, {"hidden_sizes": (4,)}, "b1"),
                                  (LstmRegressor, {"hidden_size": 4}, "bout")):
            model = cls(epochs=1, seed=0, **kwargs).fit(dataset)
            model.set_params_vector(np.zeros_like(model.params_vector()))
            model.params_[bias] = model.params_[bias] + 0.7
            want = dataset.normalization.denormalize_target(np.array([0.7]))[0]
            assert model.predict(dataset.samples) == pytest.approx(
                np.full(6, want)
            )

    def test_fit_requires_normalization(self):
        plain = small_dataset(n=4, seed=7)
        unnormalized = SupervisedDataset(samples=plain.samples,
                                         month_weeks=plain.month_weeks)
        with pytest.raises(ContractError, match="normalized"):
            MlnnRegressor().fit(unnormalized)
        with pytest.raises(ContractError, match="normalized"):
            LstmRegressor().fit(unnormalized)

    def test_fit_rejects_empty_dataset(self):
        donor = small_dataset(n=4, seed=8)
        empty = SupervisedDataset(
            samples=(), month_weeks=4
        ).with_normalization(donor.normalization)
        with pytest.raises(ValueError):
            MlnnRegressor().fit(empty)

    def test_params_vector_length_mismatch(self):
        dataset = small_dataset(n=4, seed=9)
        model = MlnnRegressor(hidden_sizes=(3,), epochs=1, seed=0).fit(dataset)
        too_long = np.zeros(model.params_vector().shape[0] + 1)
        with pytest.raises(ValueError, match="length mismatch"):
            model.set_params_vector(too_long)

    def test_predict_before_fit_raises(self):
        with pytest.raises(ContractError):
            MlnnRegressor().predict([])
        with pytest.raises(ContractError):
            LstmRegressor().predict([])

    def test_empty_predict_returns_empty(self):
        dataset = small_dataset(n=4, seed=10)
        model = LstmRegressor(hidden_size=3, epochs=1, seed=0).fit(dataset)
        assert model.predict([]).shape == (0,)

    def test_window_length_mismatch_rejected(self):
        model = MlnnRegressor(hidden_sizes=(3,), epochs=1, seed=0)
        model.fit(small_dataset(n=4, window=5, seed=11))
        other = small_dataset(n=2, window=8, seed=12)
        with pytest.raises(ContractError):
            model.predict(other.samples)


class TestSerialization:
    @pytest.mark.parametrize("cls,kwargs", [
        (MlnnRegressor, {"hidden_sizes": (6, 4)}),
        (LstmRegressor, {"hidden_size": 5}),
    ])
    def test_state_round_trip_preserves_predictions(self, cls, kwargs):
        dataset = small_dataset(n=15, seed=13)
        model = cls(epochs=3, seed=1, **kwargs).fit(dataset)
        restored = cls.from_state(model.state_dict())
        assert np.array_equal(model.predict(dataset.samples),
                              restored.predict(dataset.samples))
        assert restored.social_only == model.social_only
