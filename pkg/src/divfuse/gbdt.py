"""Small histogram-based gradient-boosted trees for binary classification.

Features are cut into equal-frequency bins once; each tree is grown level by
level from per-node gradient/hessian histograms under the logistic loss.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyFeatures, SingleClassInput, WidthMismatch


@dataclass(frozen=True)
class GbdtConfig:
    n_trees: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_leaf: int = 20
    n_bins: int = 64
    l2: float = 1.0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")


@dataclass
class Tree:
    """Flat binary tree; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def constant(cls, v):
        return cls(
            np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([float(v)])
        )

    @property
    def depth(self):
        depth = np.zeros(self.feature.size, dtype=int)
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return node
            go_left = X[rows, np.where(inner, feat, 0)] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(inner, nxt, node)

    def predict(self, X):
        return self.value[self.apply(X)]


@dataclass
class GbdtModel:
    trees: list
    base_score: float
    n_features: int
    train_loss: list = field(default_factory=list)

    def decision_function(self, X):
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise WidthMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        f = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            f += t.predict(X)
        return f


def _as_matrix(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _sigmoid(f):
    return 0.5 * (1.0 + np.tanh(0.5 * f))


def log_loss(f, y):
    # log(1 + e^f) - y f, stable for both signs
    return float(np.mean(np.logaddexp(0.0, f) - y * f))


def bin_edges(col, n_bins):
    """Approximately equal-frequency cut points; ``v`` falls in bin ``#edges < v``.

    Each quantile cut slides by up to half a bin to the widest gap between
    neighbouring sorted values, so clusters are not split down the middle.
    """
    uniq = np.unique(col)
    if uniq.size <= n_bins:
        return (uniq[:-1] + uniq[1:]) / 2.0
    s = np.sort(col)
    gaps = np.diff(s)
    n, step = s.size, s.size / n_bins
    edges = []
    for k in range(1, n_bins):
        lo = max(0, int(k * step - step / 2))
        hi = min(n - 2, int(k * step + step / 2))
        j = lo + int(np.argmax(gaps[lo : hi + 1]))
        if gaps[j] > 0:
            edges.append((s[j] + s[j + 1]) / 2.0)
    return np.unique(edges)


def _grow_tree(binned, edges, g, h, cfg):
    n, n_feat = binned.shape
    n_bins = cfg.n_bins
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    node_of = np.zeros(n, dtype=int)
    frontier = [0]
    lam = cfg.l2

    for _depth in range(cfg.max_depth):
        if not frontier:
            break
        slot = np.full(len(feature), -1)
        slot[frontier] = np.arange(len(frontier))
        s = slot[node_of]
        active = s >= 0
        rows = np.flatnonzero(active)
        base = (s[rows, None] * n_feat + np.arange(n_feat)) * n_bins
        idx = (base + binned[rows]).ravel()
        size = len(frontier) * n_feat * n_bins
        shape = (len(frontier), n_feat, n_bins)
        hg = np.bincount(idx, np.repeat(g[rows], n_feat), size).reshape(shape)
        hh = np.bincount(idx, np.repeat(h[rows], n_feat), size).reshape(shape)
        hc = np.bincount(idx, None, size).reshape(shape)
        gl, hl, cl = hg.cumsum(2), hh.cumsum(2), hc.cumsum(2)
        G, H, N = gl[:, :1, -1:], hl[:, :1, -1:], cl[:, :1, -1:]
        gr, hr, cr = G - gl, H - hl, N - cl
        gain = gl**2 / (hl + lam) + gr**2 / (hr + lam) - G**2 / (H + lam)
        valid = (cl >= cfg.min_leaf) & (cr >= cfg.min_leaf)
        for f in range(n_feat):
            valid[:, f, len(edges[f]) :] = False
        gain = np.where(valid, gain, -np.inf)

        new_frontier = []
        for k, node in enumerate(frontier):
            flat = int(np.argmax(gain[k]))
            best = gain[k].flat[flat]
            if not best > 1e-12:
                continue
            f, b = divmod(flat, n_bins)
            li, ri = len(feature), len(feature) + 1
            feature[node], threshold[node] = f, float(edges[f][b])
            left[node], right[node] = li, ri
            feature += [-1, -1]
            threshold += [0.0, 0.0]
            left += [-1, -1]
            right += [-1, -1]
            value += [0.0, 0.0]
            in_node = node_of == node
            go_left = in_node & (binned[:, f] <= b)
            node_of[go_left] = li
            node_of[in_node & ~go_left] = ri
            new_frontier += [li, ri]
        frontier = new_frontier

    gsum = np.bincount(node_of, g, len(feature))
    hsum = np.bincount(node_of, h, len(feature))
    leaf = np.asarray(feature) < 0
    vals = np.where(leaf, -gsum / (hsum + lam), 0.0) * cfg.learning_rate
    tree = Tree(np.asarray(feature), np.asarray(threshold), np.asarray(left), np.asarray(right), vals)
    return tree, node_of


def train_gbdt(X, y, config=GbdtConfig()):
    """Fit a boosted ensemble to labels ``y`` in {0, 1}.

    A tree whose step would raise the training log-loss has its leaf values
    halved until it does not, so the per-round loss never increases.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.size == 0 or X.shape[0] == 0:
        raise EmptyFeatures("no training rows")
    if X.shape[0] != y.size:
        raise ValueError("X and y lengths differ")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    n_pos = int(y.sum())
    if min(n_pos, y.size - n_pos) < 2:
        raise SingleClassInput("need at least 2 samples of each class")

    edges = [bin_edges(X[:, j], config.n_bins) for j in range(X.shape[1])]
    binned = np.column_stack(
        [np.searchsorted(e, X[:, j], side="left") for j, e in enumerate(edges)]
    )
    p0 = n_pos / y.size
    base = math.log(p0 / (1 - p0))
    f = np.full(y.size, base)
    loss = log_loss(f, y)
    model = GbdtModel([], base, X.shape[1], [loss])

    for _ in range(config.n_trees):
        p = _sigmoid(f)
        g, h = p - y, p * (1 - p)
        tree, node_of = _grow_tree(binned, edges, g, h, config)
        step = tree.value[node_of]
        for _ in range(30):
            new_loss = log_loss(f + step, y)
            if new_loss <= loss:
                break
            tree.value *= 0.5
            step = tree.value[node_of]
        else:
            tree.value[:] = 0.0
            step = tree.value[node_of]
            new_loss = loss
        f = f + step
        loss = new_loss
        model.trees.append(tree)
        model.train_loss.append(loss)
    return model


def predict_proba(model, X):
    """Probability of class 1 for each row."""
    return _sigmoid(model.decision_function(X))
