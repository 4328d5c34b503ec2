"""k-nearest-neighbour classifier (Euclidean, brute force)."""

import numpy as np

from .base import Classifier, ModelKind, StopReason

# Upper bound on the elements of one query-by-train distance block.
_BLOCK_ELEMENTS = 8_000_000
# Slack for the expanded-square distance before exact re-ranking.
_RELATIVE_SLACK = 1e-9


class KNNClassifier(Classifier):
    """
    Majority vote of the k closest training rows.

    Neighbours are ordered by exact squared distance sum((a - b) ** 2), ties by
    lower training row index; vote ties go to the lower class index. Candidates
    are found with the fast |a|^2 + |b|^2 - 2ab expansion and then re-ranked
    exactly, so results agree with a plain row-by-row scan.
    """

    kind = ModelKind.KNN

    def fit(self, X, y):
        self.X_train = np.array(X, dtype=np.float64)
        self.y_train = np.asarray(y, dtype=np.int64).copy()
        return 1, StopReason.NONITERATIVE, []

    @property
    def k(self) -> int:
        return min(self.cfg.k_neighbors, self.X_train.shape[0])

    def kneighbors(self, X: np.ndarray) -> np.ndarray:
        """Indices of the k nearest training rows, nearest first."""
        train = self.X_train
        n_train = train.shape[0]
        k = self.k
        train_sq = np.einsum("ij,ij->i", train, train)
        train_sq_max = float(train_sq.max(initial=0.0))
        out = np.empty((X.shape[0], k), dtype=np.int64)
        block = max(1, _BLOCK_ELEMENTS // max(1, n_train))
        for start in range(0, X.shape[0], block):
            queries = X[start:start + block]
            query_sq = np.einsum("ij,ij->i", queries, queries)
            approx = query_sq[:, None] + train_sq[None, :] - 2.0 * (queries @ train.T)
            kth = np.partition(approx, k - 1, axis=1)[:, k - 1]
            bound = kth + _RELATIVE_SLACK * (query_sq + train_sq_max + 1.0)
            for offset, row in enumerate(queries):
                candidates = np.flatnonzero(approx[offset] <= bound[offset])
                exact = np.sum((train[candidates] - row) ** 2, axis=1)
                order = np.lexsort((candidates, exact))[:k]
                out[start + offset] = candidates[order]
        return out

    def predict(self, X):
        neighbours = self.kneighbors(X)
        votes = np.zeros((X.shape[0], self.class_count), dtype=np.int64)
        rows = np.repeat(np.arange(X.shape[0]), neighbours.shape[1])
        np.add.at(votes, (rows, self.y_train[neighbours].ravel()), 1)
        return np.argmax(votes, axis=1).astype(np.int64)

    def get_params(self):
        return {"X_train": self.X_train, "y_train": self.y_train}

    def set_params(self, params):
        self.X_train = np.asarray(params["X_train"], dtype=np.float64)
        self.y_train = np.asarray(params["y_train"], dtype=np.int64)
