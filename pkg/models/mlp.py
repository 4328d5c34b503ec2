"""One-hidden-layer ReLU network trained with Adam on mini-batches."""

from typing import Dict, Tuple

import numpy as np

from .base import IterativeClassifier, ModelKind, decide, one_vs_rest_targets
from .linear import sigmoid

Params = Dict[str, np.ndarray]

PARAM_NAMES = ("W1", "b1", "W2", "b2")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def glorot_init(n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator) -> Params:
    params = {}
    for w_name, b_name, fan_in, fan_out in (("W1", "b1", n_in, n_hidden), ("W2", "b2", n_hidden, n_out)):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[w_name] = rng.uniform(-bound, bound, (fan_in, fan_out))
        params[b_name] = rng.uniform(-bound, bound, fan_out)
    return params


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def mlp_forward(params: Params, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Hidden pre-activations and output logits."""
    hidden_pre = X @ params["W1"] + params["b1"]
    logits = np.maximum(hidden_pre, 0.0) @ params["W2"] + params["b2"]
    return hidden_pre, logits


def mlp_loss_grad(params: Params, X: np.ndarray, T: np.ndarray, l2: float) -> Tuple[float, Params]:
    """
    Mean cross-entropy plus 0.5 * l2 * |W|^2 / batch size, with gradients.

    A single output column is read as a sigmoid unit, several as a softmax.
    """
    n = X.shape[0]
    hidden_pre, logits = mlp_forward(params, X)
    hidden = np.maximum(hidden_pre, 0.0)
    if logits.shape[1] == 1:
        data_loss = float(np.sum(np.logaddexp(0.0, logits) - T * logits)) / n
        delta = (sigmoid(logits) - T) / n
    else:
        log_p = log_softmax(logits)
        data_loss = -float(np.sum(T * log_p)) / n
        delta = (np.exp(log_p) - T) / n
    penalty = 0.5 * l2 * (float(np.sum(params["W1"] ** 2)) + float(np.sum(params["W2"] ** 2))) / n

    grads = {
        "W2": hidden.T @ delta + l2 * params["W2"] / n,
        "b2": delta.sum(axis=0),
    }
    back = (delta @ params["W2"].T) * (hidden_pre > 0.0)
    grads["W1"] = X.T @ back + l2 * params["W1"] / n
    grads["b1"] = back.sum(axis=0)
    return data_loss + penalty, grads


class MLPClassifier(IterativeClassifier):
    kind = ModelKind.MLP

    def _initialize(self, X, y, rng):
        self.params = glorot_init(X.shape[1], self.cfg.hidden_units, self.n_outputs, rng)
        self._X = X
        self._T = one_vs_rest_targets(y, self.class_count)
        self._m = {name: np.zeros_like(p) for name, p in self.params.items()}
        self._v = {name: np.zeros_like(p) for name, p in self.params.items()}
        self._t = 0

    def _epoch(self, rng):
        lr = self.cfg.step_size()
        order = rng.permutation(self._X.shape[0])
        for start in range(0, order.size, self.cfg.batch_size):
            idx = order[start:start + self.cfg.batch_size]
            _, grads = mlp_loss_grad(self.params, self._X[idx], self._T[idx], self.cfg.l2_mlp)
            self._t += 1
            correction1 = 1.0 - ADAM_BETA1 ** self._t
            correction2 = 1.0 - ADAM_BETA2 ** self._t
            for name in PARAM_NAMES:
                g = grads[name]
                self._m[name] = ADAM_BETA1 * self._m[name] + (1.0 - ADAM_BETA1) * g
                self._v[name] = ADAM_BETA2 * self._v[name] + (1.0 - ADAM_BETA2) * g * g
                m_hat = self._m[name] / correction1
                v_hat = self._v[name] / correction2
                self.params[name] = self.params[name] - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    def _release(self):
        for name in ("_X", "_T", "_m", "_v", "_t"):
            self.__dict__.pop(name, None)

    def predict(self, X):
        _, logits = mlp_forward(self.params, X)
        # sigmoid(z) >= 0.5 exactly when z >= 0; softmax argmax equals logit argmax.
        return decide(logits, 0.0)

    def get_params(self):
        return dict(self.params)

    def set_params(self, params):
        self.params = {name: np.asarray(params[name], dtype=np.float64) for name in PARAM_NAMES}
