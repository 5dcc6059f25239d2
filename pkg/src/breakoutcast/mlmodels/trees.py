"""Regression-tree ensembles: bagged forests and leaf-wise boosted trees.

Split search runs through breakoutcast._kernels, so the compiled and the
pure-numpy backends grow identical trees.  Splits use the rule
``x <= threshold`` with the threshold equal to the largest left-side
value, which keeps partitioning float-exact.
"""

import heapq
import itertools
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from breakoutcast import _kernels
from breakoutcast.mlmodels.base import (
    Regressor,
    check_window_length,
    feature_matrix,
)


class _Tree:
    """Flat-array binary tree; feature < 0 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)

    def predict(self, X):
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return self.value[node]
            x = X[np.arange(n), np.maximum(f, 0)]
            nxt = np.where(x <= self.threshold[node], self.left[node], self.right[node])
            node = np.where(active, nxt, node)

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def arrays(self):
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_arrays(cls, arrays):
        return cls(
            arrays["feature"],
            arrays["threshold"],
            arrays["left"],
            arrays["right"],
            arrays["value"],
        )


class _TreeArrays:
    """Append-only node storage while a tree grows."""

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def new_leaf(self, value):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def set_split(self, pos, f, thr, li, ri):
        self.feature[pos] = int(f)
        self.threshold[pos] = float(thr)
        self.left[pos] = li
        self.right[pos] = ri

    def freeze(self):
        return _Tree(self.feature, self.threshold, self.left, self.right, self.value)


def _grow_depth_first(X, y, idx, rng, n_subset, min_leaf):
    """Fully grown variance-reduction tree over a random feature subset per node."""
    d = X.shape[1]
    t = _TreeArrays()
    root = t.new_leaf(0.0)
    stack = [(root, idx)]
    while stack:
        pos, node_idx = stack.pop()
        ys = y[node_idx]
        t.value[pos] = float(ys.mean())
        n = node_idx.size
        if n < 2 * min_leaf or ys.min() == ys.max():
            continue
        if n_subset < d:
            feats = rng.permutation(d)[:n_subset].astype(np.int64)
        else:
            feats = np.arange(d, dtype=np.int64)
        found, f, thr, score = _kernels.best_split(X, y, node_idx, feats, min_leaf, 0.0)
        if not found:
            continue
        s = float(ys.sum())
        if score <= s * s / n:  # split must strictly reduce SSE
            continue
        mask = X[node_idx, f] <= thr
        li = t.new_leaf(0.0)
        ri = t.new_leaf(0.0)
        t.set_split(pos, f, thr, li, ri)
        stack.append((ri, node_idx[~mask]))
        stack.append((li, node_idx[mask]))
    return t.freeze()


def _grow_leaf_wise(X, y, idx, feats, max_leaves, min_leaf, l2, shrink):
    """Best-gain-first growth capped at max_leaves, regularized leaf values.

    Leaf value = shrink * sum(y) / (count + l2); only strictly positive
    gains are split, which keeps boosting loss non-increasing.
    """
    t = _TreeArrays()
    counter = itertools.count()

    def new_leaf(node_idx):
        s = float(y[node_idx].sum())
        return t.new_leaf(shrink * s / (node_idx.size + l2))

    def candidate(pos, node_idx):
        n = node_idx.size
        ys = y[node_idx]
        if n < 2 * min_leaf or ys.min() == ys.max():
            return None
        found, f, thr, score = _kernels.best_split(X, y, node_idx, feats, min_leaf, l2)
        if not found:
            return None
        s = float(ys.sum())
        gain = score - s * s / (n + l2)
        if gain <= 0.0:
            return None
        return (-gain, next(counter), pos, node_idx, f, thr)

    root = new_leaf(idx)
    heap = []
    c = candidate(root, idx)
    if c is not None:
        heapq.heappush(heap, c)
    n_leaves = 1
    while heap and n_leaves < max_leaves:
        _, _, pos, node_idx, f, thr = heapq.heappop(heap)
        mask = X[node_idx, f] <= thr
        left_idx = node_idx[mask]
        right_idx = node_idx[~mask]
        li = new_leaf(left_idx)
        ri = new_leaf(right_idx)
        t.set_split(pos, f, thr, li, ri)
        n_leaves += 1
        for child_pos, child_idx in ((li, left_idx), (ri, right_idx)):
            c = candidate(child_pos, child_idx)
            if c is not None:
                heapq.heappush(heap, c)
    return t.freeze()


class RandomForestRegressor(Regressor):
    """Bagged fully grown trees; prediction = mean of the tree outputs."""

    name = "RF"
    kind = "random_forest"

    def __init__(
        self,
        n_trees=200,
        max_features_fraction=1.0 / 3.0,
        min_leaf=1,
        bootstrap=True,
        social_only=False,
        seed=0,
        n_threads=1,
    ):
        super().__init__(social_only=social_only, seed=seed)
        self.n_trees = int(n_trees)
        self.max_features_fraction = float(max_features_fraction)
        self.min_leaf = int(min_leaf)
        self.bootstrap = bool(bootstrap)
        self.n_threads = int(n_threads)
        self.trees_ = []

    def fit(self, dataset):
        samples = dataset.samples
        if len(samples) == 0:
            raise ValueError("cannot fit on an empty dataset")
        X = feature_matrix(samples, self.social_only)
        y = dataset.targets()
        n, d = X.shape
        n_subset = max(1, int(self.max_features_fraction * d))

        def build(tree_index):
            # per-tree rng keeps results identical across thread counts
            rng = np.random.default_rng(self.seed + tree_index)
            if self.bootstrap:
                idx = rng.integers(0, n, size=n).astype(np.int64)
            else:
                idx = np.arange(n, dtype=np.int64)
            return _grow_depth_first(X, y, idx, rng, n_subset, self.min_leaf)

        if self.n_threads > 1:
            with ThreadPoolExecutor(max_workers=self.n_threads) as pool:
                self.trees_ = list(pool.map(build, range(self.n_trees)))
        else:
            self.trees_ = [build(i) for i in range(self.n_trees)]
        self.window_length_ = dataset.window_length
        return self

    def predict(self, samples):
        self._check_fitted()
        if len(samples) == 0:
            return np.zeros(0)
        check_window_length(samples, self.window_length_)
        X = feature_matrix(samples, self.social_only)
        acc = np.zeros(X.shape[0])
        for tree in self.trees_:
            acc += tree.predict(X)
        return acc / len(self.trees_)

    def state_dict(self):
        return {
            "n_trees": self.n_trees,
            "max_features_fraction": self.max_features_fraction,
            "min_leaf": self.min_leaf,
            "bootstrap": self.bootstrap,
            "social_only": self.social_only,
            "seed": self.seed,
            "window_length": self.window_length_,
            "trees": [tree.arrays() for tree in self.trees_],
        }

    @classmethod
    def from_state(cls, state):
        model = cls(
            n_trees=state["n_trees"],
            max_features_fraction=state["max_features_fraction"],
            min_leaf=state["min_leaf"],
            bootstrap=state["bootstrap"],
            social_only=state["social_only"],
            seed=state["seed"],
        )
        model.trees_ = [_Tree.from_arrays(a) for a in state["trees"]]
        model.window_length_ = state["window_length"]
        return model


class GradientBoostedTrees(Regressor):
    """Stagewise squared-error boosting with leaf-wise trees.

    Prediction = training target mean + sum of shrunken trees.  Training
    loss per round is recorded in train_losses_ and never increases.
    """

    name = "GBT"
    kind = "gbt"

    def __init__(
        self,
        n_rounds=300,
        learning_rate=0.05,
        max_leaves=31,
        min_leaf=1,
        l2=1.0,
        social_only=False,
        seed=0,
    ):
        super().__init__(social_only=social_only, seed=seed)
        self.n_rounds = int(n_rounds)
        self.learning_rate = float(learning_rate)
        self.max_leaves = int(max_leaves)
        self.min_leaf = int(min_leaf)
        self.l2 = float(l2)
        self.base_score_ = 0.0
        self.trees_ = []
        self.train_losses_ = np.zeros(0)

    def fit(self, dataset):
        samples = dataset.samples
        if len(samples) == 0:
            raise ValueError("cannot fit on an empty dataset")
        X = feature_matrix(samples, self.social_only)
        y = dataset.targets()
        n, d = X.shape
        feats = np.arange(d, dtype=np.int64)
        idx = np.arange(n, dtype=np.int64)
        self.base_score_ = float(y.mean())
        pred = np.full(n, self.base_score_)
        self.trees_ = []
        losses = []
        for _ in range(self.n_rounds):
            resid = y - pred
            tree = _grow_leaf_wise(
                X, resid, idx, feats, self.max_leaves, self.min_leaf, self.l2,
                self.learning_rate,
            )
            self.trees_.append(tree)
            pred = pred + tree.predict(X)
            losses.append(float(np.mean((y - pred) ** 2)))
        self.train_losses_ = np.array(losses)
        self.window_length_ = dataset.window_length
        return self

    def predict(self, samples):
        self._check_fitted()
        if len(samples) == 0:
            return np.zeros(0)
        check_window_length(samples, self.window_length_)
        X = feature_matrix(samples, self.social_only)
        acc = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            acc += tree.predict(X)
        return acc

    def state_dict(self):
        return {
            "n_rounds": self.n_rounds,
            "learning_rate": self.learning_rate,
            "max_leaves": self.max_leaves,
            "min_leaf": self.min_leaf,
            "l2": self.l2,
            "social_only": self.social_only,
            "seed": self.seed,
            "window_length": self.window_length_,
            "base_score": self.base_score_,
            "train_losses": self.train_losses_,
            "trees": [tree.arrays() for tree in self.trees_],
        }

    @classmethod
    def from_state(cls, state):
        model = cls(
            n_rounds=state["n_rounds"],
            learning_rate=state["learning_rate"],
            max_leaves=state["max_leaves"],
            min_leaf=state["min_leaf"],
            l2=state["l2"],
            social_only=state["social_only"],
            seed=state["seed"],
        )
        model.base_score_ = float(state["base_score"])
        model.train_losses_ = np.asarray(state["train_losses"], dtype=np.float64)
        model.trees_ = [_Tree.from_arrays(a) for a in state["trees"]]
        model.window_length_ = state["window_length"]
        return model


def fit_random_forest(dataset, n_trees=200, max_features_fraction=1.0 / 3.0,
                      min_leaf=1, seed=0, bootstrap=True, social_only=False,
                      n_threads=1):
    return RandomForestRegressor(
        n_trees=n_trees, max_features_fraction=max_features_fraction,
        min_leaf=min_leaf, bootstrap=bootstrap, social_only=social_only,
        seed=seed, n_threads=n_threads,
    ).fit(dataset)


def fit_gbt(dataset, n_rounds=300, learning_rate=0.05, max_leaves=31,
            min_leaf=1, l2=1.0, seed=0, social_only=False):
    return GradientBoostedTrees(
        n_rounds=n_rounds, learning_rate=learning_rate, max_leaves=max_leaves,
        min_leaf=min_leaf, l2=l2, social_only=social_only, seed=seed,
    ).fit(dataset)
