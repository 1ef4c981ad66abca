"""mRMR feature ranking, cross-validation and best-first search over the feature count."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateTargetError, InsufficientDataError
from .zoo import ZOO, Regressor, check_kind, fit_params, fit_regressor, predict_params

log = logging.getLogger(__name__)

MRMR_BINS = 8
CV_FOLDS = 10
COARSE_STEP = 10
PATIENCE = 5


def quantile_codes(X, bins=MRMR_BINS) -> np.ndarray:
    """Equal-frequency discretisation of each column into at most ``bins`` levels."""
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 1
    X = X.reshape(len(X), -1)
    edges = np.quantile(X, np.arange(1, bins) / bins, axis=0)
    codes = np.empty(X.shape, dtype=np.int64)
    for j in range(X.shape[1]):
        codes[:, j] = np.searchsorted(edges[:, j], X[:, j], side="right")
    return codes[:, 0] if squeeze else codes


def _mi_columns(codes, other, bins) -> np.ndarray:
    """Mutual information (nats) between every column of ``codes`` and the vector ``other``."""
    n, d = codes.shape
    joint = np.bincount((np.arange(d) * bins * bins + codes * bins + other[:, None]).ravel(),
                        minlength=d * bins * bins).reshape(d, bins, bins) / n
    pa = joint.sum(axis=2, keepdims=True)
    pb = joint.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0, joint * np.log(joint / (pa * pb)), 0.0)
    return terms.sum(axis=(1, 2))


class MRMR:
    """Incremental greedy mRMR ranking (mutual-information difference form).

    The first feature maximises relevance ``I(f; y)``; each next one
    maximises ``I(f; y) - mean_s I(f; s)`` over the already selected ``s``.
    Ties go to the lower index.  ``extend(k)`` grows the ranking lazily.
    """

    def __init__(self, X, y, bins=MRMR_BINS, allow_degenerate=False):
        y = np.asarray(y, dtype=np.float64)
        self.bins = bins
        self.constant = bool(np.ptp(y) == 0.0) if y.size else True
        if self.constant and not allow_degenerate:
            raise DegenerateTargetError("target is constant; mutual information is undefined")
        self.codes = quantile_codes(X, bins)
        self.dim = self.codes.shape[1]
        self.order: list[int] = []
        if self.constant:
            # no relevance signal: keep the natural order
            self.order = list(range(self.dim))
            return
        self.relevance = _mi_columns(self.codes, quantile_codes(y, bins), bins)
        self.redundancy = np.zeros(self.dim)
        self.available = np.ones(self.dim, dtype=bool)

    def extend(self, k) -> list:
        k = min(int(k), self.dim)
        while len(self.order) < k:
            if self.order:
                score = self.relevance - self.redundancy / len(self.order)
            else:
                score = self.relevance.copy()
            score[~self.available] = -np.inf
            j = int(np.argmax(score))
            self.order.append(j)
            self.available[j] = False
            if len(self.order) < self.dim:
                self.redundancy += _mi_columns(self.codes, self.codes[:, j], self.bins)
        return self.order[:k]


def mrmr_select(X, y, k, bins=MRMR_BINS) -> list:
    """First ``k`` features of the mRMR ranking of columns of ``X`` against ``y``."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D sample matrix")
    if not 1 <= k <= X.shape[1]:
        raise ValueError(f"k must lie in [1, {X.shape[1]}], got {k}")
    if len(X) < 20:
        raise InsufficientDataError(f"mRMR needs at least 20 samples, got {len(X)}")
    return MRMR(X, y, bins).extend(k)


def cv_folds(n, folds, seed) -> list:
    """Seeded shuffle split into ``folds`` validation index sets (a partition of range(n))."""
    if folds > n:
        raise InsufficientDataError(f"{folds} folds need at least {folds} samples, got {n}")
    if folds < 2:
        raise ValueError("cross-validation needs at least 2 folds")
    rng = np.random.default_rng(seed)
    return [np.sort(f) for f in np.array_split(rng.permutation(n), folds)]


class CVContext:
    """Fold split plus per-training-fold mRMR rankings shared across models and k."""

    def __init__(self, X, y, folds=CV_FOLDS, seed=0, bins=MRMR_BINS):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.seed = seed
        self.folds = cv_folds(len(self.y), folds, seed)
        self.bins = bins
        self._rankers = {}
        self._full = None

    @property
    def dim(self):
        return self.X.shape[1]

    def train_index(self, f):
        mask = np.ones(len(self.y), dtype=bool)
        mask[self.folds[f]] = False
        return np.flatnonzero(mask)

    def ranking(self, f, k) -> list:
        if f not in self._rankers:
            tr = self.train_index(f)
            self._rankers[f] = MRMR(self.X[tr], self.y[tr], self.bins, allow_degenerate=True)
        return self._rankers[f].extend(k)

    def full_ranking(self, k) -> list:
        if self._full is None:
            self._full = MRMR(self.X, self.y, self.bins, allow_degenerate=True)
        return self._full.extend(k)


def cross_validate(X, y, model_kind, k_features, folds=CV_FOLDS, seed=0, context: CVContext | None = None,
                   bins=MRMR_BINS) -> float:
    """Mean over folds of the validation mean absolute error.

    Each fold ranks features by mRMR on its training part only and fits
    ``model_kind`` on the first ``k_features`` of that ranking.
    """
    check_kind(model_kind)
    ctx = context or CVContext(X, y, folds, seed, bins)
    errors = []
    for f, val in enumerate(ctx.folds):
        tr = ctx.train_index(f)
        sel = ctx.ranking(f, k_features)
        params = fit_params(model_kind, ctx.X[np.ix_(tr, sel)], ctx.y[tr], seed)
        pred = predict_params(model_kind, params, ctx.X[np.ix_(val, sel)])
        errors.append(np.abs(pred - ctx.y[val]).mean())
    return float(np.mean(errors))


def best_first_feature_count(X, y, model_kind, folds=CV_FOLDS, seed=0, max_features=None,
                             context: CVContext | None = None, step=COARSE_STEP, patience=PATIENCE,
                             bins=MRMR_BINS):
    """Feature count with minimal CV error found by best-first search.

    A coarse pass expands the open node with the lowest error to its
    neighbours ``k +- step``; a fine pass then does the same with step 1
    around the best count.  Each pass stops after ``patience`` expansions
    without improvement or when nothing is left to expand.

    Returns
    -------
    (k, error, table)
        ``table`` maps every evaluated k to its CV error.
    """
    ctx = context or CVContext(X, y, folds, seed, bins)
    top = ctx.dim if max_features is None else max(1, min(ctx.dim, int(max_features)))
    table = {}

    def err(k):
        if k not in table:
            table[k] = cross_validate(None, None, model_kind, k, context=ctx)
        return table[k]

    def best():
        return min(table.items(), key=lambda kv: (kv[1], kv[0]))

    def search(start, stride):
        err(start)
        expanded = set()
        stale = 0
        while stale < patience:
            open_nodes = [k for k in table if k not in expanded]
            if not open_nodes:
                break
            node = min(open_nodes, key=lambda k: (table[k], k))
            expanded.add(node)
            before = best()[1]
            for nb in (node - stride, node + stride):
                if 1 <= nb <= top:
                    err(nb)
            stale = 0 if best()[1] < before else stale + 1

    search(1, step)
    if step > 1:
        search(best()[0], 1)
    k, e = best()
    log.debug("%s: k*=%d cv=%.5f after %d evaluations", model_kind, k, e, len(table))
    return k, e, dict(sorted(table.items()))


@dataclass
class RegionModels:
    region: int
    fe: Regressor
    pe: Regressor
    report: dict = field(default_factory=dict)


def select_model(X, y, target, *, zoo=ZOO, folds=CV_FOLDS, seed=0, max_features=None, region=0,
                 bins=MRMR_BINS) -> tuple[Regressor, dict]:
    """Pick the zoo model with the lowest CV error and refit it on all samples."""
    zoo = [check_kind(k) for k in zoo]
    ctx = CVContext(X, y, folds, seed, bins)
    report = {}
    for kind in zoo:
        k, e, table = best_first_feature_count(None, None, kind, context=ctx, max_features=max_features)
        report[kind] = {"k": k, "cv_error": e, "evaluated": {str(kk): v for kk, v in table.items()}}
    order = {kind: i for i, kind in enumerate(ZOO)}
    winner = min(zoo, key=lambda kind: (report[kind]["cv_error"], order[kind]))
    k = report[winner]["k"]
    model = fit_regressor(winner, target, ctx.X, ctx.y, ctx.full_ranking(k), region=region, seed=seed,
                          cv_error=report[winner]["cv_error"])
    model.cv_table = {kind: report[kind]["cv_error"] for kind in zoo}
    return model, report


def train_region_models(samples, *, zoo=ZOO, folds=CV_FOLDS, seed=0, max_features=None,
                        bins=MRMR_BINS) -> RegionModels:
    """Fitness (theta) and blend-weight (omega) models for one region's samples."""
    if len(samples) < folds:
        raise InsufficientDataError(f"region {samples.region}: {len(samples)} samples for {folds} folds")
    out = {}
    report = {}
    for target in ("theta", "omega"):
        model, rep = select_model(samples.X, samples.target(target), target, zoo=zoo, folds=folds,
                                  seed=seed, max_features=max_features, region=samples.region, bins=bins)
        out[target] = model
        report[target] = {"selected": model.kind, "k": int(model.selected.size), "models": rep}
    return RegionModels(samples.region, out["theta"], out["omega"], report)
