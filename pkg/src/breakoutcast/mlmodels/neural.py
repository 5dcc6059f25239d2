"""Feed-forward and LSTM regressors trained by fixed-step gradient descent.

Both models operate on z-normalized inputs and targets and require the
dataset to carry NormalizationParams; predictions are mapped back to
original count units.  Training is mini-batch squared-error descent with
global gradient-norm clipping.  loss_and_gradients exposes the exact
full-batch objective so gradients can be checked against central finite
differences.
"""

import numpy as np

from breakoutcast.errors import ContractError
from breakoutcast.mlmodels.base import (
    Regressor,
    check_window_length,
    feature_matrix,
    sequence_tensor,
)

GRAD_CLIP = 5.0


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class _NeuralBase(Regressor):
    def __init__(self, epochs, batch_size, learning_rate, social_only, seed):
        super().__init__(social_only=social_only, seed=seed)
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.learning_rate = float(learning_rate)
        self.params_ = {}
        self.normalization_ = None
        self._names = ()

    # subclasses: _init_params(shape_info, rng), _loss_grads(inputs, y)

    def _design(self, samples):
        raise NotImplementedError

    def _normalized_inputs(self, samples):
        raise NotImplementedError

    def fit(self, dataset):
        if dataset.normalization is None:
            raise ContractError(
                f"{self.name} requires a normalized dataset (NormalizationParams missing)"
            )
        if len(dataset.samples) == 0:
            raise ValueError("cannot fit on an empty dataset")
        self.normalization_ = dataset.normalization
        self.window_length_ = dataset.window_length
        inputs = self._normalized_inputs(dataset.samples)
        y = self.normalization_.normalize_target(dataset.targets())
        rng = np.random.default_rng(self.seed)
        self._init_params(inputs, rng)
        n = y.shape[0]
        for _ in range(self.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = perm[start : start + self.batch_size]
                _, grads = self._loss_grads(inputs[batch], y[batch])
                self._apply(grads)
        return self

    def _apply(self, grads):
        total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        scale = 1.0 if total <= GRAD_CLIP else GRAD_CLIP / total
        step = self.learning_rate * scale
        for name in self._names:
            self.params_[name] = self.params_[name] - step * grads[name]

    def predict(self, samples):
        self._check_fitted()
        if len(samples) == 0:
            return np.zeros(0)
        check_window_length(samples, self.window_length_)
        inputs = self._normalized_inputs(samples)
        z = self._forward(inputs)
        return self.normalization_.denormalize_target(z)

    def loss_and_gradients(self, dataset):
        """Full-batch squared-error loss and its gradient at the current params."""
        self._check_fitted()
        inputs = self._normalized_inputs(dataset.samples)
        y = self.normalization_.normalize_target(dataset.targets())
        loss, grads = self._loss_grads(inputs, y)
        return loss, np.concatenate([grads[n].ravel() for n in self._names])

    def params_vector(self):
        self._check_fitted()
        return np.concatenate([self.params_[n].ravel() for n in self._names])

    def set_params_vector(self, vector):
        self._check_fitted()
        pos = 0
        for name in self._names:
            shape = self.params_[name].shape
            size = self.params_[name].size
            self.params_[name] = vector[pos : pos + size].reshape(shape).copy()
            pos += size
        if pos != vector.shape[0]:
            raise ValueError("parameter vector length mismatch")

    def _norm_state(self):
        return {
            "mean": self.normalization_.mean,
            "std": self.normalization_.std,
        }

    @staticmethod
    def _norm_from_state(state):
        from breakoutcast.preprocess import NormalizationParams

        return NormalizationParams(
            mean=np.asarray(state["mean"], dtype=np.float64),
            std=np.asarray(state["std"], dtype=np.float64),
        )


class MlnnRegressor(_NeuralBase):
    """Multi-layer feed-forward net: tanh hidden layers, linear output."""

    name = "MLNN"
    kind = "mlnn"

    def __init__(
        self,
        hidden_sizes=(64, 64),
        epochs=200,
        batch_size=32,
        learning_rate=1e-3,
        social_only=False,
        seed=0,
    ):
        super().__init__(epochs, batch_size, learning_rate, social_only, seed)
        self.hidden_sizes = tuple(int(h) for h in hidden_sizes)

    def _normalized_inputs(self, samples):
        X = feature_matrix(samples, self.social_only)
        L = samples[0].window_length
        params = self.normalization_
        out = np.empty_like(X)
        out[:, :L] = params.normalize_channel(X[:, :L], 0)
        if not self.social_only:
            out[:, L:] = params.normalize_channel(X[:, L:], 1)
        return out

    def _init_params(self, inputs, rng):
        sizes = (inputs.shape[1],) + self.hidden_sizes + (1,)
        self.params_ = {}
        names = []
        for i in range(len(sizes) - 1):
            fan_in = sizes[i]
            s = 1.0 / np.sqrt(fan_in)
            self.params_[f"W{i}"] = rng.uniform(-s, s, size=(sizes[i], sizes[i + 1]))
            self.params_[f"b{i}"] = np.zeros(sizes[i + 1])
            names += [f"W{i}", f"b{i}"]
        self._names = tuple(names)

    def _forward(self, X):
        a = X
        n_layers = len(self.hidden_sizes)
        for i in range(n_layers):
            a = np.tanh(a @ self.params_[f"W{i}"] + self.params_[f"b{i}"])
        out = a @ self.params_[f"W{n_layers}"] + self.params_[f"b{n_layers}"]
        return out[:, 0]

    def _loss_grads(self, X, y):
        n_layers = len(self.hidden_sizes)
        acts = [X]
        a = X
        for i in range(n_layers):
            a = np.tanh(a @ self.params_[f"W{i}"] + self.params_[f"b{i}"])
            acts.append(a)
        out = a @ self.params_[f"W{n_layers}"] + self.params_[f"b{n_layers}"]
        yhat = out[:, 0]
        err = yhat - y
        loss = float(np.mean(err * err))
        grads = {}
        delta = (2.0 * err / err.shape[0])[:, None]
        grads[f"W{n_layers}"] = acts[-1].T @ delta
        grads[f"b{n_layers}"] = delta.sum(axis=0)
        da = delta @ self.params_[f"W{n_layers}"].T
        for i in range(n_layers - 1, -1, -1):
            dz = da * (1.0 - acts[i + 1] * acts[i + 1])
            grads[f"W{i}"] = acts[i].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            if i > 0:
                da = dz @ self.params_[f"W{i}"].T
        return loss, grads

    def state_dict(self):
        return {
            "hidden_sizes": list(self.hidden_sizes),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "social_only": self.social_only,
            "seed": self.seed,
            "window_length": self.window_length_,
            "normalization": self._norm_state(),
            "params": {n: self.params_[n] for n in self._names},
        }

    @classmethod
    def from_state(cls, state):
        model = cls(
            hidden_sizes=state["hidden_sizes"],
            epochs=state["epochs"],
            batch_size=state["batch_size"],
            learning_rate=state["learning_rate"],
            social_only=state["social_only"],
            seed=state["seed"],
        )
        model.params_ = {
            k: np.asarray(v, dtype=np.float64) for k, v in state["params"].items()
        }
        names = []
        for i in range(len(model.hidden_sizes) + 1):
            names += [f"W{i}", f"b{i}"]
        model._names = tuple(names)
        model.normalization_ = cls._norm_from_state(state["normalization"])
        model.window_length_ = state["window_length"]
        return model


class LstmRegressor(_NeuralBase):
    """Single-layer LSTM over the weekly sequence, linear head on the last state.

    Gates are stacked [input, forget, cell, output]; the forget bias starts
    at 1.  Gradients are backpropagation through time over the full window.
    """

    name = "LSTM"
    kind = "lstm"

    def __init__(
        self,
        hidden_size=32,
        epochs=100,
        batch_size=32,
        learning_rate=1e-3,
        social_only=False,
        seed=0,
    ):
        super().__init__(epochs, batch_size, learning_rate, social_only, seed)
        self.hidden_size = int(hidden_size)

    def _normalized_inputs(self, samples):
        seq = sequence_tensor(samples, self.social_only)
        params = self.normalization_
        out = np.empty_like(seq)
        out[:, :, 0] = params.normalize_channel(seq[:, :, 0], 0)
        if not self.social_only:
            out[:, :, 1] = params.normalize_channel(seq[:, :, 1], 1)
        return out

    def _init_params(self, inputs, rng):
        c = inputs.shape[2]
        H = self.hidden_size
        sx = 1.0 / np.sqrt(c)
        sh = 1.0 / np.sqrt(H)
        b = np.zeros(4 * H)
        b[H : 2 * H] = 1.0  # forget-gate bias
        self.params_ = {
            "Wx": rng.uniform(-sx, sx, size=(c, 4 * H)),
            "Wh": rng.uniform(-sh, sh, size=(H, 4 * H)),
            "b": b,
            "Wout": rng.uniform(-sh, sh, size=(H, 1)),
            "bout": np.zeros(1),
        }
        self._names = ("Wx", "Wh", "b", "Wout", "bout")

    def _step(self, x_t, h_prev, c_prev):
        H = self.hidden_size
        z = x_t @ self.params_["Wx"] + h_prev @ self.params_["Wh"] + self.params_["b"]
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        return h, c, (i, f, g, o, tc)

    def _forward(self, seq):
        B, L, _ = seq.shape
        H = self.hidden_size
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        for t in range(L):
            h, c, _ = self._step(seq[:, t, :], h, c)
        return (h @ self.params_["Wout"] + self.params_["bout"])[:, 0]

    def _loss_grads(self, seq, y):
        B, L, _ = seq.shape
        H = self.hidden_size
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = [h]
        cs = [c]
        gates = []
        for t in range(L):
            h, c, cache = self._step(seq[:, t, :], h, c)
            hs.append(h)
            cs.append(c)
            gates.append(cache)
        yhat = (h @ self.params_["Wout"] + self.params_["bout"])[:, 0]
        err = yhat - y
        loss = float(np.mean(err * err))
        delta = (2.0 * err / err.shape[0])[:, None]
        grads = {
            "Wx": np.zeros_like(self.params_["Wx"]),
            "Wh": np.zeros_like(self.params_["Wh"]),
            "b": np.zeros_like(self.params_["b"]),
            "Wout": hs[-1].T @ delta,
            "bout": delta.sum(axis=0),
        }
        dh = delta @ self.params_["Wout"].T
        dc = np.zeros((B, H))
        for t in range(L - 1, -1, -1):
            i, f, g, o, tc = gates[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * cs[t]
            dc_prev = dc * f
            dz = np.hstack(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ]
            )
            grads["Wx"] += seq[:, t, :].T @ dz
            grads["Wh"] += hs[t].T @ dz
            grads["b"] += dz.sum(axis=0)
            dh = dz @ self.params_["Wh"].T
            dc = dc_prev
        return loss, grads

    def state_dict(self):
        return {
            "hidden_size": self.hidden_size,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "social_only": self.social_only,
            "seed": self.seed,
            "window_length": self.window_length_,
            "normalization": self._norm_state(),
            "params": {n: self.params_[n] for n in self._names},
        }

    @classmethod
    def from_state(cls, state):
        model = cls(
            hidden_size=state["hidden_size"],
            epochs=state["epochs"],
            batch_size=state["batch_size"],
            learning_rate=state["learning_rate"],
            social_only=state["social_only"],
            seed=state["seed"],
        )
        model.params_ = {
            k: np.asarray(v, dtype=np.float64) for k, v in state["params"].items()
        }
        model._names = ("Wx", "Wh", "b", "Wout", "bout")
        model.normalization_ = cls._norm_from_state(state["normalization"])
        model.window_length_ = state["window_length"]
        return model


def fit_mlnn(dataset, hidden_sizes=(64, 64), epochs=200, batch_size=32,
             learning_rate=1e-3, seed=0, social_only=False):
    return MlnnRegressor(
        hidden_sizes=hidden_sizes, epochs=epochs, batch_size=batch_size,
        learning_rate=learning_rate, social_only=social_only, seed=seed,
    ).fit(dataset)


def fit_lstm(dataset, hidden_size=32, epochs=100, batch_size=32,
             learning_rate=1e-3, seed=0, social_only=False):
    return LstmRegressor(
        hidden_size=hidden_size, epochs=epochs, batch_size=batch_size,
        learning_rate=learning_rate, social_only=social_only, seed=seed,
    ).fit(dataset)
