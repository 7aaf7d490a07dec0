"""Native classifiers over pattern-count features, plus split helpers.

Five model kinds are implemented from scratch on numpy: multinomial
logistic regression (full-batch gradient descent), k-nearest-neighbors
with inverse-distance weighting, Gaussian naive Bayes, a CART decision
tree, and a bagged forest of such trees. All randomness is drawn from a
single seed through named substreams, so results are reproducible and
independent of row order: training rows are sorted before fitting and
per-tree streams are keyed by tree index.

Probability outputs always sum to 1 per row; ``predict`` takes the
argmax with ties broken by class order.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError
from .features import FeatureMatrix

MODEL_KINDS = ("logistic", "knn", "gaussian_nb", "decision_tree", "random_forest")

MODEL_FORMAT = "negseq-model"
MODEL_VERSION = 1

_DEFAULTS: dict[str, dict] = {
    "logistic": {"reg": 1.0, "max_iter": 1000, "tol": 1e-6},
    "knn": {"k": 5, "p": 2, "eps": 1e-12},
    "gaussian_nb": {"var_floor": 1e-9},
    "decision_tree": {"min_split": 2, "min_leaf": 1, "max_depth": None, "max_features": None},
    "random_forest": {
        "n_trees": 200, "min_split": 2, "min_leaf": 1, "max_depth": None,
        "max_features": "sqrt",
    },
}


def substream(seed: int, *path) -> np.random.Generator:
    """A named, reproducible random stream derived from one run seed."""
    entropy = [int(seed) & 0xFFFFFFFF]
    for part in path:
        if isinstance(part, int):
            entropy.append(part & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(part).encode()))
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass
class DataSplit:
    """Disjoint train/test row indices covering the whole matrix."""

    train_rows: np.ndarray
    test_rows: np.ndarray

    def __post_init__(self):
        self.train_rows = np.asarray(sorted(self.train_rows), dtype=np.int64)
        self.test_rows = np.asarray(sorted(self.test_rows), dtype=np.int64)
        if set(self.train_rows.tolist()) & set(self.test_rows.tolist()):
            raise DataError("train and test rows overlap")


def _rows_by_class(labels: Sequence[str]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        groups.setdefault(label, []).append(i)
    return groups


def split(matrix: FeatureMatrix, test_fraction: float, seed: int) -> DataSplit:
    """Stratified train/test split.

    ``test_fraction`` is the held-out share; each class contributes its
    rounded share (never the whole class, and never zero rows when the
    fraction is strictly inside (0, 1) and the class has at least two).
    """
    if not (0.0 <= test_fraction <= 1.0):
        raise DataError("test_fraction must be in [0, 1]")
    train: list[int] = []
    test: list[int] = []
    for label, rows in sorted(_rows_by_class(matrix.labels).items()):
        rng = substream(seed, "split", label)
        order = rng.permutation(len(rows))
        n_test = int(round(len(rows) * test_fraction))
        if 0.0 < test_fraction < 1.0:
            n_test = max(1, min(n_test, len(rows) - 1)) if len(rows) > 1 else 0
        picked = [rows[i] for i in order]
        test.extend(picked[:n_test])
        train.extend(picked[n_test:])
    return DataSplit(np.asarray(train), np.asarray(test))


def kfold(matrix: FeatureMatrix, k: int, seed: int) -> list[DataSplit]:
    """Stratified k-fold splits; every class must have at least k rows."""
    if k < 2:
        raise DataError("k must be >= 2")
    groups = sorted(_rows_by_class(matrix.labels).items())
    for label, rows in groups:
        if len(rows) < k:
            raise DataError(f"class {label!r} has {len(rows)} rows, fewer than k={k}")
    fold_rows: list[list[int]] = [[] for _ in range(k)]
    for label, rows in groups:
        rng = substream(seed, "kfold", label)
        order = rng.permutation(len(rows))
        for j, idx in enumerate(order):
            fold_rows[j % k].append(rows[idx])
    all_rows = set(range(len(matrix.labels)))
    out = []
    for fold in fold_rows:
        test = sorted(fold)
        train = sorted(all_rows - set(test))
        out.append(DataSplit(np.asarray(train), np.asarray(test)))
    return out


@dataclass
class ModelSpec:
    """Model kind, hyperparameters (defaults filled in), and seed."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    standardize: bool = False

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DataError(f"unknown model kind {self.kind!r}")
        merged = dict(_DEFAULTS[self.kind])
        for key, value in self.params.items():
            if key not in merged:
                raise DataError(f"unknown {self.kind} parameter {key!r}")
            merged[key] = value
        self.params = merged


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def logistic_objective(
    W: np.ndarray,
    b: np.ndarray,
    X: np.ndarray,
    y_idx: np.ndarray,
    reg: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy with L2 on the weights; returns loss and gradients."""
    n = X.shape[0]
    P = softmax(X @ W + b)
    eps = np.finfo(np.float64).tiny
    loss = -np.log(P[np.arange(n), y_idx] + eps).mean()
    loss += reg / (2.0 * n) * float((W * W).sum())
    Y = np.zeros_like(P)
    Y[np.arange(n), y_idx] = 1.0
    G = (P - Y) / n
    gW = X.T @ G + (reg / n) * W
    gb = G.sum(axis=0)
    return float(loss), gW, gb


def _step_size(X: np.ndarray, reg: float) -> float:
    """1/L for a curvature bound L of the objective (power iteration)."""
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    v = np.ones(d + 1) / np.sqrt(d + 1)
    lam = 1.0
    for _ in range(100):
        w = Xa.T @ (Xa @ v)
        norm = np.linalg.norm(w)
        if norm == 0:
            break
        lam = norm
        v = w / norm
    L = 0.5 * lam / n + reg / n
    return 1.0 / max(L, 1e-12)


def _fit_logistic(X, y_idx, n_classes, params):
    W = np.zeros((X.shape[1], n_classes))
    b = np.zeros(n_classes)
    lr = _step_size(X, params["reg"])
    for _ in range(params["max_iter"]):
        _, gW, gb = logistic_objective(W, b, X, y_idx, params["reg"])
        gnorm = np.sqrt(float((gW * gW).sum()) + float((gb * gb).sum()))
        if gnorm < params["tol"]:
            break
        W -= lr * gW
        b -= lr * gb
    return {"W": W, "b": b}


# ---------------------------------------------------------------------------
# Decision trees
# ---------------------------------------------------------------------------


def _gini_from_counts(counts: np.ndarray, n: np.ndarray) -> np.ndarray:
    frac = counts / n[..., None]
    return 1.0 - (frac * frac).sum(axis=-1)


def _best_split(X, y_idx, n_classes, feature_ids, min_leaf):
    """Lowest weighted-gini split; ties go to the lowest feature, then
    the lowest threshold. Returns (feature, threshold) or None."""
    n = X.shape[0]
    best = None
    best_score = np.inf
    for f in feature_ids:
        xs_raw = X[:, f]
        order = np.argsort(xs_raw, kind="mergesort")
        xs = xs_raw[order]
        if xs[0] == xs[-1]:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y_idx[order]] = 1.0
        left_counts = np.cumsum(onehot, axis=0)[:-1]
        total = left_counts[-1] + onehot[-1]
        right_counts = total - left_counts
        nl = np.arange(1, n)
        nr = n - nl
        valid = (xs[1:] != xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        score = (
            nl * _gini_from_counts(left_counts, nl)
            + nr * _gini_from_counts(right_counts, nr)
        ) / n
        score = np.where(valid, score, np.inf)
        i = int(np.argmin(score))
        if score[i] < best_score:
            best_score = float(score[i])
            best = (int(f), float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _build_tree(X, y_idx, n_classes, params, rng, depth=0):
    n, d = X.shape
    counts = np.bincount(y_idx, minlength=n_classes).astype(np.float64)
    leaf = {"leaf": (counts / n).tolist()}
    max_depth = params["max_depth"]
    if (
        n < params["min_split"]
        or counts.max() == n
        or (max_depth is not None and depth >= max_depth)
    ):
        return leaf
    if params["max_features"] == "sqrt":
        m = max(1, int(np.sqrt(d)))
        feature_ids = np.sort(rng.choice(d, size=m, replace=False))
    else:
        feature_ids = np.arange(d)
    found = _best_split(X, y_idx, n_classes, feature_ids, params["min_leaf"])
    if found is None:
        return leaf
    f, thr = found
    mask = X[:, f] <= thr
    return {
        "feature": f,
        "threshold": thr,
        "left": _build_tree(X[mask], y_idx[mask], n_classes, params, rng, depth + 1),
        "right": _build_tree(X[~mask], y_idx[~mask], n_classes, params, rng, depth + 1),
    }


def _tree_proba_one(node: dict, x: np.ndarray) -> np.ndarray:
    while "leaf" not in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return np.asarray(node["leaf"])


def _tree_proba(node: dict, X: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.empty((X.shape[0], n_classes))
    for i in range(X.shape[0]):
        out[i] = _tree_proba_one(node, X[i])
    return out


# ---------------------------------------------------------------------------
# Trained model container
# ---------------------------------------------------------------------------


@dataclass
class TrainedModel:
    kind: str
    classes: list[str]
    n_features: int
    params: dict
    state: dict
    scaler: dict | None = None

    def _prep(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(
                f"expected {self.n_features} features, got shape {X.shape}"
            )
        if self.scaler is not None:
            X = (X - np.asarray(self.scaler["mean"])) / np.asarray(self.scaler["scale"])
        return X

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = self._prep(X)
        C = len(self.classes)
        if self.kind == "logistic":
            P = softmax(X @ np.asarray(self.state["W"]) + np.asarray(self.state["b"]))
        elif self.kind == "gaussian_nb":
            theta = np.asarray(self.state["theta"])
            var = np.asarray(self.state["var"])
            log_prior = np.log(np.asarray(self.state["prior"]))
            ll = np.empty((X.shape[0], C))
            for c in range(C):
                ll[:, c] = log_prior[c] - 0.5 * (
                    np.log(2.0 * np.pi * var[c]) + (X - theta[c]) ** 2 / var[c]
                ).sum(axis=1)
            ll -= ll.max(axis=1, keepdims=True)
            P = np.exp(ll)
        elif self.kind == "knn":
            Xtr = np.asarray(self.state["X"])
            ytr = np.asarray(self.state["y"], dtype=np.int64)
            k = min(self.params["k"], Xtr.shape[0])
            eps = self.params["eps"]
            p = self.params["p"]
            P = np.zeros((X.shape[0], C))
            for i in range(X.shape[0]):
                diff = np.abs(Xtr - X[i]) ** p
                dist = diff.sum(axis=1) ** (1.0 / p)
                order = np.argsort(dist, kind="mergesort")[:k]
                w = 1.0 / (dist[order] + eps)
                for j, idx in enumerate(order):
                    P[i, ytr[idx]] += w[j]
        elif self.kind == "decision_tree":
            P = _tree_proba(self.state["tree"], X, C)
        elif self.kind == "random_forest":
            P = np.zeros((X.shape[0], C))
            for tree in self.state["trees"]:
                P += _tree_proba(tree, X, C)
            P /= len(self.state["trees"])
        else:  # pragma: no cover - ModelSpec blocks unknown kinds
            raise DataError(f"unknown model kind {self.kind!r}")
        total = P.sum(axis=1, keepdims=True)
        total[total == 0] = 1.0
        return P / total

    def predict(self, X: np.ndarray) -> list[str]:
        proba = self.predict_proba(X)
        return [self.classes[i] for i in proba.argmax(axis=1)]


def train(spec: ModelSpec, matrix: FeatureMatrix, rows: Sequence[int]) -> TrainedModel:
    """Fit one model on the given matrix rows.

    Rows are sorted first so any permutation of the same row set yields
    the identical model.
    """
    rows = np.asarray(sorted(rows), dtype=np.int64)
    if rows.size == 0:
        raise DataError("cannot train on zero rows")
    X = np.asarray(matrix.values[rows], dtype=np.float64)
    labels = [matrix.labels[i] for i in rows]
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise DataError("training data needs at least two classes")
    y_idx = np.asarray([classes.index(l) for l in labels], dtype=np.int64)

    scaler = None
    if spec.standardize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        scale = np.where(std == 0, 1.0, std)
        X = (X - mean) / scale
        scaler = {"mean": mean.tolist(), "scale": scale.tolist()}

    C = len(classes)
    if spec.kind == "logistic":
        fit = _fit_logistic(X, y_idx, C, spec.params)
        state = {"W": fit["W"].tolist(), "b": fit["b"].tolist()}
    elif spec.kind == "gaussian_nb":
        theta = np.empty((C, X.shape[1]))
        var = np.empty((C, X.shape[1]))
        prior = np.empty(C)
        for c in range(C):
            Xc = X[y_idx == c]
            theta[c] = Xc.mean(axis=0)
            var[c] = np.maximum(Xc.var(axis=0), spec.params["var_floor"])
            prior[c] = Xc.shape[0] / X.shape[0]
        state = {"theta": theta.tolist(), "var": var.tolist(), "prior": prior.tolist()}
    elif spec.kind == "knn":
        state = {"X": X.tolist(), "y": y_idx.tolist()}
    elif spec.kind == "decision_tree":
        rng = substream(spec.seed, "tree", 0)
        state = {"tree": _build_tree(X, y_idx, C, spec.params, rng)}
    elif spec.kind == "random_forest":
        trees = []
        n = X.shape[0]
        for t in range(spec.params["n_trees"]):
            rng = substream(spec.seed, "tree", t)
            idx = rng.integers(0, n, size=n)
            trees.append(_build_tree(X[idx], y_idx[idx], C, spec.params, rng))
        state = {"trees": trees}
    else:  # pragma: no cover
        raise DataError(f"unknown model kind {spec.kind!r}")

    return TrainedModel(
        kind=spec.kind,
        classes=classes,
        n_features=X.shape[1],
        params=spec.params,
        state=state,
        scaler=scaler,
    )


def save_model(model: TrainedModel, path: str) -> None:
    """Write a self-describing JSON blob with a format/version tag."""
    blob = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "classes": model.classes,
        "n_features": model.n_features,
        "params": model.params,
        "state": model.state,
        "scaler": model.scaler,
    }
    with open(path, "w") as fh:
        json.dump(blob, fh, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> TrainedModel:
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a {MODEL_FORMAT} file")
    if blob.get("version") != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {blob.get('version')}")
    return TrainedModel(
        kind=blob["kind"],
        classes=blob["classes"],
        n_features=blob["n_features"],
        params=blob["params"],
        state=blob["state"],
        scaler=blob["scaler"],
    )
