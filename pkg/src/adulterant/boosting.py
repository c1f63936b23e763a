"""Real (confidence-rated) AdaBoost.MH over decision stumps.

Multi-label learning is reduced to one binary problem per (example, label)
pair sharing a single weight distribution. The binary adulteration
detector is the one-label special case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

FORMAT_HEADER = "adaboost-mh 1"


class TrainingError(RuntimeError):
    """Raised when a model cannot be trained on the given data."""


@dataclass(frozen=True)
class DecisionStump:
    feature: int
    threshold: float
    c_below: np.ndarray
    c_above: np.ndarray

    def __call__(self, X):
        X = np.atleast_2d(X)
        above = X[:, self.feature] > self.threshold
        return np.where(above[:, None], self.c_above[None, :], self.c_below[None, :])


@dataclass
class StumpEnsemble:
    """A trained ensemble; ``f(x, l)`` is the sum of stump confidences."""

    features: np.ndarray
    thresholds: np.ndarray
    c_below: np.ndarray
    c_above: np.ndarray
    labels: tuple
    z_history: np.ndarray = field(default_factory=lambda: np.empty(0))
    task: str = "multilabel"

    @property
    def T(self) -> int:
        return len(self.features)

    @property
    def L(self) -> int:
        return len(self.labels)

    @property
    def stumps(self) -> List[DecisionStump]:
        return [
            DecisionStump(int(j), float(t), cb, ca)
            for j, t, cb, ca in zip(self.features, self.thresholds, self.c_below, self.c_above)
        ]

    def truncate(self, T: int) -> "StumpEnsemble":
        if not 1 <= T <= self.T:
            raise ValueError(f"cannot truncate {self.T} rounds to {T}")
        return StumpEnsemble(
            self.features[:T].copy(), self.thresholds[:T].copy(), self.c_below[:T].copy(),
            self.c_above[:T].copy(), self.labels, self.z_history[:T].copy(), self.task,
        )

    def staged_scores(self, X) -> np.ndarray:
        """Scores after each round, shape (n, T, L)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.T and X.shape[1] <= int(self.features.max()):
            raise ValueError(f"dimension mismatch: model uses feature {int(self.features.max())}, "
                             f"input has {X.shape[1]}")
        above = X[:, self.features] > self.thresholds[None, :]
        H = np.where(above[:, :, None], self.c_above[None], self.c_below[None])
        return np.cumsum(H, axis=1)

    def scores(self, X) -> np.ndarray:
        return self.staged_scores(X)[:, -1, :]


# --------------------------------------------------------------------------
# Weak learner
# --------------------------------------------------------------------------


@njit(cache=True)
def _search_kernel(order_T, valid_T, Dp, Dm):
    d, N = order_T.shape
    L = Dp.shape[1]
    totp = np.zeros(L)
    totm = np.zeros(L)
    for i in range(N):
        for l in range(L):
            totp[l] += Dp[i, l]
            totm[l] += Dm[i, l]
    bp = np.empty(L)
    bm = np.empty(L)
    best = np.inf
    best_j = -1
    best_k = -1
    for j in range(d):
        bp[:] = 0.0
        bm[:] = 0.0
        for k in range(N):
            if valid_T[j, k]:
                z = 0.0
                for l in range(L):
                    ap = max(totp[l] - bp[l], 0.0)
                    am = max(totm[l] - bm[l], 0.0)
                    z += np.sqrt(bp[l] * bm[l]) + np.sqrt(ap * am)
                z *= 2.0
                # strict comparison keeps the smallest (feature, threshold)
                if z < best:
                    best = z
                    best_j = j
                    best_k = k
            i = order_T[j, k]
            for l in range(L):
                bp[l] += Dp[i, l]
                bm[l] += Dm[i, l]
    return best_j, best_k, best


class _StumpSearch:
    """Exhaustive stump search with per-feature sort orders computed once."""

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        self.X = X
        N, d = X.shape
        order = np.argsort(X, axis=0, kind="stable")
        xs = np.take_along_axis(X, order, axis=0)
        # cut k puts the first k sorted values below the threshold
        valid = np.empty((N, d), dtype=bool)
        valid[0] = True
        valid[1:] = xs[1:] > xs[:-1]
        thr = np.empty((N, d))
        thr[0] = -np.inf
        lo, hi = xs[:-1], xs[1:]
        mid = lo + (hi - lo) / 2.0
        thr[1:] = np.where(mid < hi, mid, lo)
        self.order_T = np.ascontiguousarray(order.T)
        self.valid_T = np.ascontiguousarray(valid.T)
        self.thr = thr

    def best(self, D, Y, eps):
        Dp = np.ascontiguousarray(np.where(Y > 0, D, 0.0))
        Dm = np.ascontiguousarray(np.where(Y < 0, D, 0.0))
        j, k, z = _search_kernel(self.order_T, self.valid_T, Dp, Dm)
        theta = float(self.thr[k, j])
        above = self.X[:, j] > theta
        c_above = _confidence(Dp[above].sum(axis=0), Dm[above].sum(axis=0), eps)
        c_below = _confidence(Dp[~above].sum(axis=0), Dm[~above].sum(axis=0), eps)
        return DecisionStump(int(j), theta, c_below, c_above), float(z)


def _confidence(wp, wm, eps):
    return 0.5 * np.log((wp + eps) / (wm + eps))


def _as_sign_matrix(Y):
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    if np.all(np.isin(Y, (0, 1))):
        Y = 2 * Y - 1
    if not np.all(np.isin(Y, (-1, 1))):
        raise ValueError("targets must be 0/1 indicators or -1/+1 signs")
    return Y.astype(float)


def best_stump(X, Y, weights) -> DecisionStump:
    """Stump minimising ``Z = 2 sum_branch sum_l sqrt(W+ W-)`` under ``weights``.

    Candidate thresholds are the midpoints between consecutive distinct
    values of each attribute plus one threshold below the minimum. Ties go
    to the smaller feature index, then the smaller threshold.
    """
    X = np.asarray(X, dtype=float)
    Y = _as_sign_matrix(Y)
    weights = np.asarray(weights, dtype=float).reshape(Y.shape)
    eps = 1.0 / Y.size
    stump, _ = _StumpSearch(X).best(weights, Y, eps)
    return stump


def train_adaboost_mh(X, Y, T: int, labels: Optional[Sequence[str]] = None,
                      task: str = "multilabel", callback=None) -> StumpEnsemble:
    """Run ``T`` rounds of real AdaBoost.MH.

    Parameters
    ----------
    X : array of shape (N, d)
    Y : array of shape (N, L) with 0/1 or -1/+1 entries, or a vector of signs
        for the binary case.
    T : int
        Number of boosting rounds; exactly ``T`` stumps are returned.
    labels : names of the L labels (defaults to ``0..L-1``).
    callback : optional ``callback(t, weights, scores)`` invoked after every
        round with the normalised weight matrix and training scores.
    """
    X = check_array(X, dtype=float)
    Y = _as_sign_matrix(Y)
    N, L = Y.shape
    if X.shape[0] != N:
        raise ValueError("X and Y have different row counts")
    if T < 1:
        raise ValueError("T must be >= 1")
    if N < 2:
        raise TrainingError("need at least two examples")
    if L == 1 and np.all(Y == Y[0, 0]):
        raise TrainingError("degenerate dataset: every example has the same sign")
    if labels is None:
        labels = tuple(str(l) for l in range(L))
    labels = tuple(labels)
    if len(labels) != L:
        raise ValueError("label names do not match the target width")

    eps = 1.0 / (N * L)
    D = np.full((N, L), 1.0 / (N * L))
    search = _StumpSearch(X)
    F = np.zeros((N, L))
    feats, thrs, cbs, cas, zs = [], [], [], [], []
    for t in range(T):
        stump, _ = search.best(D, Y, eps)
        h = stump(X)
        D = D * np.exp(-Y * h)
        Z = D.sum()
        D /= Z
        F += h
        feats.append(stump.feature)
        thrs.append(stump.threshold)
        cbs.append(stump.c_below)
        cas.append(stump.c_above)
        zs.append(Z)
        if callback is not None:
            callback(t, D, F)
    return StumpEnsemble(
        np.array(feats, dtype=int), np.array(thrs, dtype=float), np.array(cbs), np.array(cas),
        labels, np.array(zs), task,
    )


def predict_scores(model: StumpEnsemble, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    s = model.scores(x)
    return s[0] if single else s


def predict_labels(model: StumpEnsemble, x) -> frozenset:
    """Labels with strictly positive score; possibly empty."""
    s = predict_scores(model, np.asarray(x, dtype=float).ravel())
    return frozenset(int(l) for l in np.flatnonzero(s > 0))


# --------------------------------------------------------------------------
# Serialisation
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    return format(float(v), ".17g")


def dumps_ensemble(model: StumpEnsemble) -> str:
    lines = [
        FORMAT_HEADER,
        f"task {model.task}",
        "labels " + "\t".join(model.labels),
        f"rounds {model.T}",
        "z " + " ".join(_fmt(z) for z in model.z_history),
    ]
    for j, t, cb, ca in zip(model.features, model.thresholds, model.c_below, model.c_above):
        fields = [str(int(j)), _fmt(t)] + [_fmt(v) for v in cb] + [_fmt(v) for v in ca]
        lines.append("stump " + " ".join(fields))
    return "\n".join(lines) + "\n"


def loads_ensemble(text: str) -> StumpEnsemble:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ValueError(f"unknown model format: {lines[0] if lines else ''!r}")
    try:
        task = lines[1].split(" ", 1)[1]
        labels = tuple(lines[2].split(" ", 1)[1].split("\t"))
        T = int(lines[3].split()[1])
        ztok = lines[4].split()[1:]
        L = len(labels)
        feats, thrs, cbs, cas = [], [], [], []
        for line in lines[5:5 + T]:
            tok = line.split()
            if tok[0] != "stump" or len(tok) != 3 + 2 * L:
                raise ValueError(f"bad stump line {line!r}")
            feats.append(int(tok[1]))
            thrs.append(float(tok[2]))
            vals = [float(v) for v in tok[3:]]
            cbs.append(vals[:L])
            cas.append(vals[L:])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed ensemble file: {exc}") from None
    if len(feats) != T:
        raise ValueError("stump count does not match the rounds line")
    return StumpEnsemble(
        np.array(feats, dtype=int), np.array(thrs, dtype=float),
        np.array(cbs, dtype=float).reshape(T, L), np.array(cas, dtype=float).reshape(T, L),
        labels, np.array([float(z) for z in ztok]), task,
    )


# --------------------------------------------------------------------------
# Estimator
# --------------------------------------------------------------------------


class AdaBoostMH(ClassifierMixin, BaseEstimator):
    """Real AdaBoost.MH with decision stumps.

    ``y`` may be a vector with exactly two classes (binary detector; the
    larger class value is the positive one) or an (N, L) 0/1 indicator
    matrix (multi-label).

    Parameters
    ----------
    n_estimators : int, default=100
        Number of boosting rounds T.
    """

    def __init__(self, n_estimators=100):
        self.n_estimators = n_estimators

    def fit(self, X, y, label_names=None):
        X = check_array(X, dtype=float)
        y = np.asarray(y)
        if y.ndim == 1:
            self.classes_ = np.unique(y)
            if len(self.classes_) != 2:
                raise TrainingError(
                    f"binary targets need exactly two classes, got {len(self.classes_)}")
            Y = np.where(y == self.classes_[1], 1, -1)[:, None]
            names = label_names or (str(self.classes_[1]),)
            task = "binary"
        else:
            Y = np.asarray(y, dtype=int)
            self.classes_ = np.arange(Y.shape[1])
            names = label_names
            task = "multilabel"
        self.ensemble_ = train_adaboost_mh(X, Y, int(self.n_estimators), names, task)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def multilabel_(self):
        return self.ensemble_.task == "multilabel"

    def _check(self, X):
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def decision_function(self, X):
        s = self.ensemble_.scores(self._check(X))
        return s if self.multilabel_ else s[:, 0]

    def staged_decision_function(self, X):
        """Yield scores after each round (useful to select T without refitting)."""
        S = self.ensemble_.staged_scores(self._check(X))
        for t in range(S.shape[1]):
            yield S[:, t, :] if self.multilabel_ else S[:, t, 0]

    def predict(self, X):
        s = self.decision_function(X)
        if self.multilabel_:
            return (s > 0).astype(int)
        return self.classes_[(s > 0).astype(int)]

    @classmethod
    def from_ensemble(cls, ensemble: StumpEnsemble, n_features):
        obj = cls(n_estimators=ensemble.T)
        obj.ensemble_ = ensemble
        obj.n_features_in_ = n_features
        obj.classes_ = np.array([-1, 1]) if ensemble.task == "binary" else np.arange(ensemble.L)
        return obj


def training_error(model: StumpEnsemble, X, Y) -> float:
    """Fraction of (example, label) pairs whose score sign disagrees with ``Y``."""
    Y = _as_sign_matrix(Y)
    F = model.scores(X)
    return float(np.mean(np.sign(F) != Y))


def z_product(model: StumpEnsemble) -> np.ndarray:
    """Running product of the per-round normalisers."""
    return np.cumprod(model.z_history)


__all__ = [
    "AdaBoostMH", "DecisionStump", "StumpEnsemble", "TrainingError", "best_stump",
    "dumps_ensemble", "loads_ensemble", "predict_labels", "predict_scores",
    "train_adaboost_mh", "training_error", "z_product",
]

