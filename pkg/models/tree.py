"""
CART decision tree with Gini impurity, stored as flat node arrays.

A node splits while it is impure and some feature still takes two distinct
values, so zero-gain splits are allowed (XOR is learnable). Candidate
thresholds are midpoints between consecutive distinct values and rows with
x <= threshold go left. Ties go to the lower feature index, then the lower
threshold; leaves predict the majority class, lowest index on ties.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .base import Classifier, ModelKind, StopReason

LEAF = -1


@dataclass
class TreeArrays:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.feature.size)

    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for node in range(self.node_count):
            if self.left[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max(initial=0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        nodes = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.left[nodes] != LEAF)
        while active.size:
            current = nodes[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            nodes[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.left[nodes[active]] != LEAF]
        return nodes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_params(self):
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_params(cls, params) -> "TreeArrays":
        return cls(
            feature=np.asarray(params["feature"], dtype=np.int64),
            threshold=np.asarray(params["threshold"], dtype=np.float64),
            left=np.asarray(params["left"], dtype=np.int64),
            right=np.asarray(params["right"], dtype=np.int64),
            value=np.asarray(params["value"], dtype=np.int64),
        )


def best_split(x: np.ndarray, y: np.ndarray, class_count: int) -> Optional[Tuple[float, float]]:
    """
    Best Gini split of one feature.

    Args:
        x: Feature values of the node's rows
        y: Class indices of the node's rows
        class_count: Number of classes

    Returns:
        (weighted child impurity, threshold), or None when x is constant
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    n = xs.size
    onehot = np.zeros((n, class_count))
    onehot[np.arange(n), y[order]] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]
    right = left[-1] + onehot[-1] - left
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    # Weighted child impurity is (n - purity) / n.
    purity = np.sum(left ** 2, axis=1) / n_left + np.sum(right ** 2, axis=1) / n_right
    purity[~valid] = -np.inf
    position = int(np.argmax(purity))
    lo, hi = xs[position], xs[position + 1]
    threshold = lo + (hi - lo) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return (n - purity[position]) / n, float(threshold)


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    class_count: int,
    rng: Optional[np.random.Generator] = None,
    max_features: Optional[int] = None,
    max_depth: Optional[int] = None,
) -> TreeArrays:
    """
    Grow a tree without recursion.

    With rng and max_features set, every split first tries a random feature
    subset; when none of those features varies the remaining ones are tried,
    so a node only becomes a leaf when it is pure or all its rows are identical.
    """
    n_features = X.shape[1]
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[int] = []

    def new_node(rows: np.ndarray) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(int(np.argmax(np.bincount(y[rows], minlength=class_count))))
        return len(feature) - 1

    stack = [(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]), 0)]
    while stack:
        node, rows, depth = stack.pop()
        labels = y[rows]
        if np.all(labels == labels[0]) or (max_depth is not None and depth >= max_depth):
            continue

        if rng is not None and max_features is not None and max_features < n_features:
            sampled = np.sort(rng.choice(n_features, size=max_features, replace=False))
            rest = np.setdiff1d(np.arange(n_features), sampled)
            passes = (sampled, rest)
        else:
            passes = (np.arange(n_features),)

        best = None
        for candidates in passes:
            for f in candidates:
                found = best_split(X[rows, f], labels, class_count)
                if found is not None and (best is None or found[0] < best[0]):
                    best = (found[0], int(f), found[1])
            if best is not None:
                break
        if best is None:
            continue

        _, f, thr = best
        goes_left = X[rows, f] <= thr
        left_rows, right_rows = rows[goes_left], rows[~goes_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        stack.append((right[node], right_rows, depth + 1))
        stack.append((left[node], left_rows, depth + 1))

    return TreeArrays(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.int64),
    )


class DecisionTreeClassifier(Classifier):
    kind = ModelKind.DECISION_TREE

    def fit(self, X, y):
        self.tree = build_tree(X, np.asarray(y, dtype=np.int64), self.class_count,
                               max_depth=self.cfg.max_depth)
        return 1, StopReason.NONITERATIVE, []

    def predict(self, X):
        return self.tree.predict(X)

    def get_params(self):
        return self.tree.to_params()

    def set_params(self, params):
        self.tree = TreeArrays.from_params(params)
