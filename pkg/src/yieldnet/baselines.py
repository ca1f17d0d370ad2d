"""Pointwise comparison models: LASSO, random forest regression, Average.

Baselines operate on the flattened target-year features of a sample (no
multi-year window) plus the average-yield scalar.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .features import Standardizer


def flatten_features(sample):
    """Flat raw feature vector of one sample, in the fixed documented order:
    weather (variable-major), soil profile (variable-major), surface soil,
    management, average-yield input."""
    rec = sample.records[-1]
    if rec is None:
        raise ContractViolation("sample window is incomplete")
    return np.concatenate([
        rec.weather.ravel(),
        rec.soil_profile.ravel(),
        rec.soil_surface,
        rec.management,
        [sample.avg_yield_inputs[-1]],
    ])


def _soft_threshold(z, lam):
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


@dataclass
class LassoModel:
    coef: np.ndarray
    intercept: float
    lam: float
    n_sweeps: int = 0
    standardizer: Standardizer | None = None

    kind = "lasso"

    def predict(self, X):
        return np.asarray(X) @ self.coef + self.intercept


def lasso_objective(X, y, coef, intercept, lam):
    r = y - X @ coef - intercept
    return 0.5 * np.mean(r * r) + lam * np.abs(coef).sum()


def fit_lasso(X, y, lam, tol=1e-8, max_sweeps=10000) -> LassoModel:
    """Cyclic coordinate descent for (1/2n)||y - X b - b0||^2 + lam * ||b||_1.

    Columns are expected z-scored; zero-variance columns are excluded with a
    warning and keep coefficient zero. Converges when the largest coefficient
    change in a sweep falls below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 2:
        raise ContractViolation("lasso needs at least two rows")
    if lam < 0:
        raise ContractViolation("lasso penalty must be >= 0")
    col_sq = (X * X).mean(axis=0)
    active = col_sq > 1e-24
    if not active.all():
        warnings.warn(
            f"excluding {int((~active).sum())} constant feature(s) from the lasso fit"
        )
    coef = np.zeros(p)
    intercept = float(y.mean())
    resid = y - intercept  # residual excludes X @ coef, which starts at 0
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(p):
            if not active[j]:
                continue
            xj = X[:, j]
            old = coef[j]
            if old != 0.0:
                resid += xj * old
            rho = float(xj @ resid) / n
            new = _soft_threshold(rho, lam) / col_sq[j]
            if new != 0.0:
                resid -= xj * new
            coef[j] = new
            delta = abs(new - old)
            if delta > max_delta:
                max_delta = delta
        new_intercept = float((y - X @ coef).mean())
        resid += intercept - new_intercept
        intercept = new_intercept
        if max_delta < tol:
            break
    return LassoModel(coef=coef, intercept=intercept, lam=lam, n_sweeps=sweeps)


# ---------------------------------------------------------------------------
# random forest regression


@dataclass
class RegressionTree:
    """Flat-array binary tree. Leaves have feature == -1 and store the mean
    of their training targets in ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X):
        X = np.asarray(X)
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if row[self.feature[node]] <= self.threshold[node] \
                    else self.right[node]
            out[i] = self.value[node]
        return out

    def max_depth(self):
        depth = {0: 0}
        worst = 0
        for node in range(len(self.feature)):
            d = depth[node]
            worst = max(worst, d)
            if self.feature[node] >= 0:
                depth[self.left[node]] = d + 1
                depth[self.right[node]] = d + 1
        return worst


def _best_split(X, y, feature_ids, min_leaf):
    """(feature, threshold, gain) maximizing variance reduction, or None.

    Thresholds are midpoints between consecutive distinct sorted values;
    ties break toward the lowest feature index, then lowest threshold.
    """
    n = y.shape[0]
    if n < 2 * min_leaf:
        return None
    total = y.sum()
    total_sq = float(y @ y)
    parent_sse = total_sq - total * total / n
    pos = np.arange(min_leaf - 1, n - min_leaf)  # split after this sorted row
    best = None
    for f in sorted(feature_ids):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        valid = xs[pos] != xs[pos + 1]
        if not valid.any():
            continue
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        nl = pos + 1.0
        nr = n - nl
        sl = csum[pos]
        sr = total - sl
        sse = (csq[pos] - sl * sl / nl) + ((total_sq - csq[pos]) - sr * sr / nr)
        gains = np.where(valid, parent_sse - sse, -np.inf)
        j = int(np.argmax(gains))  # first max: lowest threshold on ties
        gain = float(gains[j])
        if gain > 1e-12 and (best is None or gain > best[2] + 1e-12):
            best = (f, 0.5 * (xs[pos[j]] + xs[pos[j] + 1]), gain)
    return best


def _grow_tree(X, y, max_depth, min_leaf, n_feats, rng):
    feature = []
    threshold = []
    left = []
    right = []
    value = []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(rows, depth):
        node = new_node()
        ysub = y[rows]
        value[node] = float(ysub.mean())
        if depth >= max_depth or rows.shape[0] < 2 * min_leaf or np.ptp(ysub) == 0.0:
            return node
        p = X.shape[1]
        chosen = rng.choice(p, size=min(n_feats, p), replace=False)
        split = _best_split(X[rows], ysub, chosen, min_leaf)
        if split is None:
            return node
        f, thr, _ = split
        feature[node] = f
        threshold[node] = thr
        go_left = X[rows, f] <= thr
        left[node] = build(rows[go_left], depth + 1)
        right[node] = build(rows[~go_left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return RegressionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value),
    )


@dataclass
class ForestModel:
    trees: list
    seed: int = 0
    standardizer: Standardizer | None = None

    kind = "rf"

    def predict(self, X):
        X = np.asarray(X)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)


def fit_random_forest(X, y, n_trees=50, max_depth=10, seed=0, min_leaf=2,
                      bootstrap=True, n_split_features=None) -> ForestModel:
    """Bootstrap forest with variance-reduction splits.

    Each split considers a random subsample of ceil(p/3) features (or all,
    when ``n_split_features`` covers p). Per-tree seeds derive from ``seed``
    so the forest is reproducible and independent of training order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 2:
        raise ContractViolation("forest needs at least two rows")
    if n_split_features is None:
        n_split_features = int(np.ceil(p / 3))
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for s in seeds:
        rng = np.random.default_rng(s)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            _grow_tree(X[rows], y[rows], max_depth, min_leaf, n_split_features, rng)
        )
    return ForestModel(trees=trees, seed=seed)


@dataclass
class AverageModel:
    mean: float
    standardizer: Standardizer | None = None

    kind = "average"

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], self.mean)


def average_baseline(train_targets) -> AverageModel:
    """Constant predictor at the mean of the training targets."""
    t = np.asarray(train_targets, dtype=np.float64)
    if t.size == 0:
        raise ContractViolation("average baseline needs at least one target")
    return AverageModel(mean=float(t.mean()))
