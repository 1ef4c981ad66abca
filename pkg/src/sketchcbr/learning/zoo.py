"""Regressor zoo: tree ensembles, isotonic, nearest neighbours, linear, stump.

Every model is reduced to a dict of numpy arrays so it can be stored in the
binary model format and evaluated without the library that fitted it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr
from sklearn.isotonic import IsotonicRegression
from sklearn.tree import DecisionTreeRegressor

from ..errors import DimensionError

MIN_LEAF = 5
N_BAGS = 10
KNN_K = 5

# index order is the tie-break order of model selection
ZOO = ("M1", "M4", "M7", "M9", "M10", "M12")
KIND_NAMES = {
    "M1": "bagging-trees",
    "M4": "regression-tree",
    "M7": "isotonic",
    "M9": "knn",
    "M10": "linear",
    "M12": "decision-stump",
}
TARGETS = ("theta", "omega")


def check_kind(kind):
    if kind not in KIND_NAMES:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(ZOO)}")
    return kind


def _export_tree(t: DecisionTreeRegressor, prefix="") -> dict:
    tree = t.tree_
    return {
        prefix + "left": tree.children_left.astype(np.int32),
        prefix + "right": tree.children_right.astype(np.int32),
        prefix + "feature": tree.feature.astype(np.int32),
        prefix + "threshold": tree.threshold.astype(np.float64),
        prefix + "value": tree.value[:, 0, 0].astype(np.float64),
    }


def _tree_predict(p, X, prefix="") -> np.ndarray:
    left = p[prefix + "left"]
    right = p[prefix + "right"]
    feat = p[prefix + "feature"]
    thr = p[prefix + "threshold"]
    # the fitted splits compare float32 inputs
    X = np.asarray(X, dtype=np.float32)
    node = np.zeros(len(X), dtype=np.intp)
    active = left[node] >= 0
    rows = np.arange(len(X))
    while active.any():
        r = rows[active]
        n = node[r]
        go_left = X[r, feat[n]] <= thr[n]
        node[r] = np.where(go_left, left[n], right[n])
        active = left[node] >= 0
    return p[prefix + "value"][node]


def _leaf(value, prefix="") -> dict:
    """A one-node tree predicting ``value`` exactly."""
    return {
        prefix + "left": np.array([-1], dtype=np.int32),
        prefix + "right": np.array([-1], dtype=np.int32),
        prefix + "feature": np.array([-2], dtype=np.int32),
        prefix + "threshold": np.array([-2.0]),
        prefix + "value": np.array([value], dtype=np.float64),
    }


def _fit_tree(X, y, seed, max_depth=None):
    t = DecisionTreeRegressor(min_samples_leaf=MIN_LEAF, max_depth=max_depth, random_state=seed)
    t.fit(np.asarray(X, dtype=np.float32), y)
    return t


def fit_params(kind, X, y, seed=0, knn_k=KNN_K) -> dict:
    """Fit model ``kind`` on ``X`` (n, k) and ``y`` (n,), returning its parameter arrays."""
    check_kind(kind)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise DimensionError(f"bad training shapes X{X.shape} y{y.shape}")
    if kind in ("M1", "M4", "M12") and np.ptp(y) == 0.0:
        # leaf means of a constant would carry rounding noise
        return _leaf(y[0]) if kind != "M1" else {"n_bags": np.array([1], dtype=np.int32), **_leaf(y[0], "t0_")}
    if kind == "M4":
        return _export_tree(_fit_tree(X, y, seed))
    if kind == "M12":
        return _export_tree(_fit_tree(X, y, seed, max_depth=1))
    if kind == "M1":
        rng = np.random.default_rng(seed)
        params = {"n_bags": np.array([N_BAGS], dtype=np.int32)}
        for b in range(N_BAGS):
            idx = rng.integers(0, len(y), len(y))
            t = _fit_tree(X[idx], y[idx], int(rng.integers(2**31 - 1)))
            params.update(_export_tree(t, f"t{b}_"))
        return params
    if kind == "M7":
        rho = spearmanr(X[:, 0], y)[0] if np.ptp(X[:, 0]) > 0 and np.ptp(y) > 0 else 0.0
        iso = IsotonicRegression(increasing=bool(rho >= 0), out_of_bounds="clip").fit(X[:, 0], y)
        return {"x": iso.X_thresholds_.astype(np.float64), "y": iso.y_thresholds_.astype(np.float64)}
    if kind == "M9":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std < 1e-12] = 1.0
        return {"train": (X - mean) / std, "target": y.copy(), "mean": mean, "std": std,
                "k": np.array([min(knn_k, len(y))], dtype=np.int32)}
    # M10: least squares with intercept
    A = np.column_stack([X, np.ones(len(X))])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return {"coef": coef}


def _knn_predict(p, X, chunk=2048):
    train = p["train"]
    target = p["target"]
    k = int(p["k"][0])
    Z = (np.asarray(X, dtype=np.float64) - p["mean"]) / p["std"]
    sq_train = (train ** 2).sum(axis=1)
    out = np.empty(len(Z))
    for s in range(0, len(Z), chunk):
        z = Z[s:s + chunk]
        d2 = np.maximum((z ** 2).sum(axis=1)[:, None] - 2 * z @ train.T + sq_train[None, :], 0.0)
        # stable order keeps tie-breaking by training index
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        d = np.sqrt(np.take_along_axis(d2, nn, axis=1))
        t = target[nn]
        exact = d < 1e-9
        w = np.where(exact.any(axis=1, keepdims=True), exact.astype(np.float64), 1.0 / np.maximum(d, 1e-12))
        out[s:s + chunk] = (w * t).sum(axis=1) / w.sum(axis=1)
    return out


def predict_params(kind, params, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if kind in ("M4", "M12"):
        return _tree_predict(params, X)
    if kind == "M1":
        n = int(params["n_bags"][0])
        return np.mean([_tree_predict(params, X, f"t{b}_") for b in range(n)], axis=0)
    if kind == "M7":
        return np.interp(X[:, 0], params["x"], params["y"])
    if kind == "M9":
        return _knn_predict(params, X)
    if kind == "M10":
        coef = params["coef"]
        return X @ coef[:-1] + coef[-1]
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class Regressor:
    """A fitted zoo model restricted to a list of input features.

    ``dim`` is the full composite-input length the model expects;
    ``selected`` indexes into it.  Weight (``omega``) models clamp their
    output to [0, 1].
    """

    kind: str
    target: str
    selected: np.ndarray
    params: dict
    dim: int
    region: int = 0
    cv_error: float = float("nan")
    seed: int = 0
    cv_table: dict = field(default_factory=dict)

    def __post_init__(self):
        check_kind(self.kind)
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {self.target!r}")
        self.selected = np.asarray(self.selected, dtype=np.int64)
        if self.selected.size == 0:
            raise ValueError("a regressor needs at least one selected feature")
        if self.selected.min() < 0 or self.selected.max() >= self.dim:
            raise ValueError(f"selected feature indices must lie in [0, {self.dim})")

    def predict(self, X) -> np.ndarray:
        """Predictions for rows of ``X`` (n, dim) or one input vector."""
        X = np.asarray(getattr(X, "values", X), dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.dim:
            raise DimensionError(f"model expects {self.dim} input features, got {X.shape[1]}")
        y = predict_params(self.kind, self.params, X[:, self.selected])
        if self.target == "omega":
            y = np.clip(y, 0.0, 1.0)
        return float(y[0]) if single else y


def fit_regressor(kind, target, X, y, selected, *, region=0, seed=0, cv_error=float("nan"),
                  knn_k=KNN_K) -> Regressor:
    X = np.asarray(X, dtype=np.float64)
    selected = np.asarray(selected, dtype=np.int64)
    params = fit_params(kind, X[:, selected], y, seed, knn_k)
    return Regressor(kind, target, selected, params, X.shape[1], region, float(cv_error), seed)


def predict(model: Regressor, input) -> float:
    """Prediction for one composite input (or a batch of rows)."""
    return model.predict(input)
