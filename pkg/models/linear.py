"""
Linear learners: least squares and logistic regression by full-batch gradient
descent, and a Pegasos linear SVM.

The loss functions are module level so gradient checks can call them with
arbitrary parameters.
"""

import logging
from typing import Any, Dict, Tuple

import numpy as np

from .base import IterativeClassifier, ModelKind, decide, one_vs_rest_targets

logger = logging.getLogger(__name__)

# Heavy-ball momentum is stable while step * curvature < 2 * (1 + momentum).
_STABILITY_MARGIN = 1.8


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def squared_loss_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, T: np.ndarray):
    """Mean half squared error of X @ W + b against T, with gradients."""
    n = X.shape[0]
    residual = X @ W + b - T
    loss = 0.5 * float(np.sum(residual ** 2)) / n
    return loss, X.T @ residual / n, residual.sum(axis=0) / n


def logistic_loss_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, T: np.ndarray):
    """Mean one-vs-rest cross-entropy of sigmoid(X @ W + b) against 0/1 targets T."""
    n = X.shape[0]
    z = X @ W + b
    loss = float(np.sum(np.logaddexp(0.0, z) - T * z)) / n
    delta = sigmoid(z) - T
    return loss, X.T @ delta / n, delta.sum(axis=0) / n


def hinge_loss_grad(W: np.ndarray, Xa: np.ndarray, S: np.ndarray, lam: float):
    """
    Regularized hinge loss with the bias folded into W.

    Args:
        W: (features + 1) x outputs weights, last row is the bias
        Xa: Inputs with a trailing constant 1 column
        S: Targets in {-1, +1}
        lam: L2 strength

    Returns:
        (loss, subgradient with respect to W)
    """
    n = Xa.shape[0]
    margins = S * (Xa @ W)
    active = (margins < 1.0).astype(np.float64)
    loss = 0.5 * lam * float(np.sum(W ** 2)) + float(np.sum(np.maximum(0.0, 1.0 - margins))) / n
    grad = lam * W - Xa.T @ (S * active) / n
    return loss, grad


def augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def standardization(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    return mean, scale


class _FullBatchLinear(IterativeClassifier):
    """Gradient descent with heavy-ball momentum on standardized inputs."""

    threshold = 0.5
    curvature_factor = 1.0

    def _initialize(self, X, y, rng):
        self.mean_, self.scale_ = standardization(X)
        self._Z = (X - self.mean_) / self.scale_
        self._T = one_vs_rest_targets(y, self.class_count)
        self.W = np.zeros((X.shape[1], self.n_outputs))
        self.b = self._prior_bias(self._T.mean(axis=0))
        self._vW = np.zeros_like(self.W)
        self._vb = np.zeros_like(self.b)

        momentum = self.cfg.momentum
        step = self.cfg.step_size()
        curvature = self.curvature_factor * float(np.linalg.eigvalsh(self._Z.T @ self._Z / X.shape[0])[-1])
        limit = _STABILITY_MARGIN * (1.0 + momentum) / curvature if curvature > 0 else step
        if step > limit:
            logger.debug("%s step %.4g capped at %.4g", self.kind.value, step, limit)
            step = limit
        self._step = step

    def _epoch(self, rng):
        _, gW, gb = self._loss_grad(self.W, self.b, self._Z, self._T)
        self._vW = self.cfg.momentum * self._vW - self._step * gW
        self._vb = self.cfg.momentum * self._vb - self._step * gb
        self.W = self.W + self._vW
        self.b = self.b + self._vb

    def _release(self):
        for name in ("_Z", "_T", "_vW", "_vb"):
            self.__dict__.pop(name, None)

    def scores(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean_) / self.scale_ @ self.W + self.b

    def predict(self, X):
        return decide(self.scores(X), self.threshold)

    def get_params(self) -> Dict[str, Any]:
        return {"mean": self.mean_, "scale": self.scale_, "W": self.W, "b": self.b}

    def set_params(self, params):
        self.mean_ = np.asarray(params["mean"], dtype=np.float64)
        self.scale_ = np.asarray(params["scale"], dtype=np.float64)
        self.W = np.asarray(params["W"], dtype=np.float64)
        self.b = np.asarray(params["b"], dtype=np.float64)


class LinearRegressionClassifier(_FullBatchLinear):
    kind = ModelKind.LINEAR_REGRESSION

    @staticmethod
    def _loss_grad(W, b, Z, T):
        return squared_loss_grad(W, b, Z, T)

    @staticmethod
    def _prior_bias(prior):
        return prior.copy()


class LogisticRegressionClassifier(_FullBatchLinear):
    kind = ModelKind.LOGISTIC_REGRESSION
    curvature_factor = 0.25

    @staticmethod
    def _loss_grad(W, b, Z, T):
        return logistic_loss_grad(W, b, Z, T)

    @staticmethod
    def _prior_bias(prior):
        p = np.clip(prior, 1e-6, 1.0 - 1e-6)
        return np.log(p / (1.0 - p))

    def scores(self, X):
        return sigmoid(super().scores(X))


class LinearSVMClassifier(IterativeClassifier):
    """Pegasos: eta_t = 1 / (lambda * t), one step per mini-batch, one-vs-rest columns updated together."""

    kind = ModelKind.LINEAR_SVM

    def _initialize(self, X, y, rng):
        self.mean_, self.scale_ = standardization(X)
        self._Xa = augment((X - self.mean_) / self.scale_)
        self._S = 2.0 * one_vs_rest_targets(y, self.class_count) - 1.0
        self.W = np.zeros((self._Xa.shape[1], self.n_outputs))
        self._t = 0

    def _epoch(self, rng):
        lam = self.cfg.svm_lambda
        batch = self.cfg.svm_batch_size
        order = rng.permutation(self._Xa.shape[0])
        W = self.W
        for start in range(0, order.size, batch):
            idx = order[start:start + batch]
            self._t += 1
            eta = 1.0 / (lam * self._t)
            xa = self._Xa[idx]
            s = self._S[idx]
            active = (s * (xa @ W)) < 1.0
            W *= 1.0 - eta * lam
            W += (eta / idx.size) * (xa.T @ (s * active))
        self.W = W

    def _release(self):
        for name in ("_Xa", "_S", "_t"):
            self.__dict__.pop(name, None)

    def scores(self, X):
        return augment((X - self.mean_) / self.scale_) @ self.W

    def predict(self, X):
        return decide(self.scores(X), 0.0)

    def get_params(self):
        return {"mean": self.mean_, "scale": self.scale_, "W": self.W}

    def set_params(self, params):
        self.mean_ = np.asarray(params["mean"], dtype=np.float64)
        self.scale_ = np.asarray(params["scale"], dtype=np.float64)
        self.W = np.asarray(params["W"], dtype=np.float64)
