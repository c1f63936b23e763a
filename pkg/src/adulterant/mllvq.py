"""Multi-label learning vector quantization with a meta-labeler.

Every label owns S positive and S negative prototypes. The score of label
``l`` for ``x`` is ``d-(x, l) - d+(x, l)`` with squared Euclidean distances
to the nearest negative and positive prototype of ``l``. Training is SGD on
a pairwise hinge over (relevant, irrelevant) label pairs, which upper
bounds the rank loss. A boosted meta-labeler predicts how many labels to
keep; the kept labels are ordered by score so the first one is the
predicted major component.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .boosting import AdaBoostMH, TrainingError, dumps_ensemble, loads_ensemble
from .dataset import UnitScaler

FORMAT_HEADER = "ml-lvq 1"
POS, NEG = 0, 1
JITTER = 1e-3


class Prototype(NamedTuple):
    label: int
    polarity: str
    position: np.ndarray


@dataclass
class PrototypeBook:
    """Prototype positions stored as an array of shape (L, 2, S, d).

    Axis 1 is the polarity: index 0 holds positive prototypes, index 1
    negative ones.
    """

    positions: np.ndarray
    labels: tuple

    @property
    def L(self):
        return self.positions.shape[0]

    @property
    def S(self):
        return self.positions.shape[2]

    @property
    def d(self):
        return self.positions.shape[3]

    @property
    def prototypes(self) -> List[Prototype]:
        out = []
        for l in range(self.L):
            for pol, name in ((POS, "positive"), (NEG, "negative")):
                for s in range(self.S):
                    out.append(Prototype(l, name, self.positions[l, pol, s]))
        return out

    def copy(self):
        return PrototypeBook(self.positions.copy(), self.labels)

    def nearest_sq_distances(self, X):
        """Squared distances to the nearest positive and negative prototype.

        Returns two arrays of shape (n, L).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"dimension mismatch: expected {self.d}, got {X.shape[1]}")
        L, _, S, _ = self.positions.shape
        d2 = np.empty((X.shape[0], L, 2, S))
        for l in range(L):
            for pol in (POS, NEG):
                for s in range(S):
                    diff = X - self.positions[l, pol, s]
                    d2[:, l, pol, s] = np.einsum("nd,nd->n", diff, diff)
        d2 = d2.min(axis=3)
        return d2[:, :, POS], d2[:, :, NEG]

    def scores(self, X):
        dpos, dneg = self.nearest_sq_distances(X)
        return dneg - dpos


def score_labels(book: PrototypeBook, x) -> np.ndarray:
    """Score vector ``s(x, l) = d-(x, l) - d+(x, l)`` for one example."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return book.scores(x[None])[0]


# --------------------------------------------------------------------------
# Initialisation
# --------------------------------------------------------------------------


def kmeans(X, k, rng, max_iter=100):
    """Lloyd's algorithm seeded with ``k`` distinct sampled points.

    Groups smaller than ``k`` return their points cycled and jittered
    uniformly by at most ``JITTER`` per coordinate.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty group")
    if n < k:
        base = X[np.arange(k) % n]
        return base + rng.uniform(-JITTER, JITTER, size=base.shape)
    centers = X[rng.choice(n, size=k, replace=False)].copy()
    assign = None
    for _ in range(max_iter):
        # |x|^2 is constant per row and does not affect the argmin
        d2 = (centers * centers).sum(axis=1)[None, :] - 2.0 * X @ centers.T
        new = np.argmin(d2, axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for c in range(k):
            members = X[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return centers


def kmeans_init(X, Y, S, seed=0, labels=None) -> PrototypeBook:
    """Class-wise k-means: positives of ``l`` give its positive prototypes,
    all remaining examples its negative ones."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y).astype(bool)
    N, L = Y.shape
    labels = tuple(labels) if labels is not None else tuple(str(l) for l in range(L))
    rng = np.random.default_rng([seed, 0])
    P = np.empty((L, 2, S, X.shape[1]))
    for l in range(L):
        pos, neg = X[Y[:, l]], X[~Y[:, l]]
        if len(pos) == 0:
            raise TrainingError(f"label {labels[l]!r} has no positive training examples")
        if len(neg) == 0:
            raise TrainingError(f"label {labels[l]!r} has no negative training examples")
        P[l, POS] = kmeans(pos, S, rng)
        P[l, NEG] = kmeans(neg, S, rng)
    return PrototypeBook(P, labels)


def mean_nearest_distance(book: PrototypeBook, X) -> float:
    """Average Euclidean distance from each row of ``X`` to its nearest prototype."""
    X = np.asarray(X, dtype=float)
    flat = book.positions.reshape(-1, book.d)
    d2 = (X * X).sum(1)[:, None] - 2.0 * X @ flat.T + (flat * flat).sum(1)[None]
    return float(np.sqrt(np.maximum(d2.min(axis=1), 0.0)).mean())


# --------------------------------------------------------------------------
# Loss and gradient
# --------------------------------------------------------------------------


@njit(cache=True)
def _pair_kernel(s, relevant, alpha):
    L = s.shape[0]
    n_p = 0
    for l in range(L):
        if relevant[l]:
            n_p += 1
    n_q = L - n_p
    g = np.zeros(L)
    if n_p == 0 or n_q == 0:
        return g, 0.0
    c = 1.0 / (n_p * n_q)
    loss = 0.0
    for p in range(L):
        if not relevant[p]:
            continue
        for q in range(L):
            if relevant[q]:
                continue
            m = alpha - (s[p] - s[q])
            if m > 0:
                g[p] -= c
                g[q] += c
                loss += m
    return g, c * loss


def _pair_coefficients(s, relevant, alpha):
    """dL/ds for every label plus the loss value, given one score vector."""
    return _pair_kernel(np.asarray(s, dtype=float), np.asarray(relevant, dtype=np.bool_),
                        float(alpha))


def _nearest(book_positions, x):
    diff = x[None, None, None, :] - book_positions
    d2 = np.einsum("lpsd,lpsd->lps", diff, diff)
    idx = np.argmin(d2, axis=2)
    L = book_positions.shape[0]
    rows = np.arange(L)
    return idx, d2[rows, POS, idx[:, POS]], d2[rows, NEG, idx[:, NEG]]


def surrogate_loss(book: PrototypeBook, x, y, alpha=0.0) -> float:
    """``(1/|Y||Ybar|) sum_{p in Y, q not in Y} max(0, alpha - (s_p - s_q))``."""
    x = np.asarray(x, dtype=float)
    _, dpos, dneg = _nearest(book.positions, x)
    _, loss = _pair_coefficients(dneg - dpos, np.asarray(y, dtype=bool), alpha)
    return loss


def surrogate_gradient(book: PrototypeBook, x, y, alpha=0.0) -> np.ndarray:
    """Gradient of :func:`surrogate_loss` with respect to every prototype coordinate."""
    x = np.asarray(x, dtype=float)
    idx, _, _ = _nearest(book.positions, x)
    grad = np.zeros_like(book.positions)
    s = book.scores(x[None])[0]
    g, _ = _pair_coefficients(s, np.asarray(y, dtype=bool), alpha)
    for l in np.flatnonzero(g):
        wp = book.positions[l, POS, idx[l, POS]]
        wn = book.positions[l, NEG, idx[l, NEG]]
        # s = |x - wn|^2 - |x - wp|^2
        grad[l, POS, idx[l, POS]] = g[l] * 2.0 * (x - wp)
        grad[l, NEG, idx[l, NEG]] = -g[l] * 2.0 * (x - wn)
    return grad


def rank_loss(scores, y) -> float:
    """Fraction of (relevant, irrelevant) pairs with ``s_p <= s_q``."""
    y = np.asarray(y, dtype=bool)
    sp, sq = scores[y], scores[~y]
    if len(sp) == 0 or len(sq) == 0:
        return 0.0
    return float(np.mean(sp[:, None] <= sq[None, :]))


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


@dataclass
class LvqTrainConfig:
    S: int = 1
    M: int = 40
    alpha: float = 0.0
    eta0: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.S < 1 or self.M < 1:
            raise ValueError("S and M must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.eta0 is not None and self.eta0 <= 0:
            raise ValueError("eta0 must be > 0")


@njit(cache=True)
def _sgd_kernel(flat, norms, X, Y, order, skip, t0, total, eta0, alpha, L, S):
    """Run SGD steps over ``order`` in place; returns the summed surrogate.

    ``flat`` holds the prototypes as rows ``(l * 2 + polarity) * S + s`` and
    ``norms`` their squared norms, kept in sync with every update.
    """
    d = X.shape[1]
    sel = np.empty((L, 2), np.int64)
    s = np.empty(L)
    dpos = np.empty(L)
    t = t0
    loss_sum = 0.0
    for i in order:
        if skip[i]:
            t += 1
            continue
        x = X[i]
        eta = eta0 * (1.0 - t / total)
        t += 1
        proj = flat @ x
        for l in range(L):
            for p in range(2):
                base = (l * 2 + p) * S
                best = base
                bv = norms[base] - 2.0 * proj[base]
                for k in range(1, S):
                    v = norms[base + k] - 2.0 * proj[base + k]
                    if v < bv:
                        bv = v
                        best = base + k
                sel[l, p] = best
                acc = 0.0
                for k in range(d):
                    e = x[k] - flat[best, k]
                    acc += e * e
                if p == 0:
                    dpos[l] = acc
                else:
                    s[l] = acc - dpos[l]
        g, loss = _pair_kernel(s, Y[i], alpha)
        loss_sum += loss
        for l in range(L):
            if g[l] == 0.0:
                continue
            c = 2.0 * eta * g[l]
            rp = sel[l, 0]
            rn = sel[l, 1]
            sp = 0.0
            sn = 0.0
            for k in range(d):
                wp = flat[rp, k] - c * (x[k] - flat[rp, k])
                wn = flat[rn, k] + c * (x[k] - flat[rn, k])
                flat[rp, k] = wp
                flat[rn, k] = wn
                sp += wp * wp
                sn += wn * wn
            norms[rp] = sp
            norms[rn] = sn
    return loss_sum


class _Trainer:
    """SGD state; nearest prototypes are looked up through dot products."""

    def __init__(self, book: PrototypeBook, alpha):
        self.P = np.ascontiguousarray(book.positions, dtype=float).copy()
        L, _, S, d = self.P.shape
        self.L, self.S = L, S
        self.flat = self.P.reshape(L * 2 * S, d)
        self.norms = np.einsum("kd,kd->k", self.flat, self.flat)
        self.alpha = float(alpha)

    def run(self, X, Y, order, skip, t0, total, eta0):
        return _sgd_kernel(self.flat, self.norms, X, Y, order, skip, float(t0), float(total),
                           float(eta0), self.alpha, self.L, self.S)

    def step(self, x, relevant, eta):
        x = np.ascontiguousarray(x, dtype=float)[None]
        y = np.asarray(relevant, dtype=np.bool_)[None]
        zero = np.zeros(1, dtype=np.int64)
        return self.run(x, y, zero, np.zeros(1, dtype=np.bool_), 0.0, np.inf, eta)


def mean_surrogate(book: PrototypeBook, X, Y, alpha) -> float:
    S = book.scores(X)
    Yb = np.asarray(Y, dtype=bool)
    return float(np.mean([_pair_coefficients(s, y, alpha)[1] for s, y in zip(S, Yb)]))


def train_mllvq(X, Y, config: LvqTrainConfig, labels=None, init: Optional[PrototypeBook] = None,
                history: Optional[list] = None) -> PrototypeBook:
    """Fit prototypes by SGD on the pairwise hinge surrogate.

    ``X`` must already be scaled. When ``init`` is omitted the prototypes
    are initialised by class-wise k-means. The learning rate decays
    linearly from ``eta0`` to 0 over ``M * N`` steps; ``eta0`` defaults to
    0.1 times the mean distance of the training rows to their nearest
    initial prototype. If ``history`` is a list, the mean training
    surrogate after every epoch is appended to it.
    """
    X = check_array(X, dtype=float)
    Y = np.asarray(Y).astype(bool)
    N = X.shape[0]
    book = init.copy() if init is not None else kmeans_init(X, Y, config.S, config.seed, labels)
    eta0 = config.eta0 if config.eta0 is not None else 0.1 * mean_nearest_distance(book, X)
    if eta0 <= 0:
        raise TrainingError("initial learning rate is zero (prototypes coincide with the data)")

    full = Y.all(axis=1)
    if full.any():
        warnings.warn(f"{int(full.sum())} example(s) carry every label and are skipped",
                      RuntimeWarning, stacklevel=2)
    trainer = _Trainer(book, config.alpha)
    rng = np.random.default_rng([config.seed, 1])
    X = np.ascontiguousarray(X)
    Y = np.ascontiguousarray(Y)
    total = config.M * N
    for epoch in range(config.M):
        trainer.run(X, Y, rng.permutation(N), full, epoch * N, total, eta0)
        if history is not None:
            history.append(mean_surrogate(PrototypeBook(trainer.P, book.labels), X, Y, config.alpha))
    return PrototypeBook(trainer.P, book.labels)


# --------------------------------------------------------------------------
# Meta-labeler and ranked prediction
# --------------------------------------------------------------------------


class MetaLabeler(BaseEstimator):
    """Predicts the label-set size with a boosted classifier over sizes.

    The sizes observed in training form the classes; each example is a
    single-label instance of its own size. The predicted size is the one
    with the largest score, ties going to the smaller size.
    """

    def __init__(self, n_estimators=100):
        self.n_estimators = n_estimators

    def fit(self, X, Y):
        X = check_array(X, dtype=float)
        sizes = np.asarray(Y).sum(axis=1).astype(int)
        self.counts_ = np.unique(sizes)
        if len(self.counts_) > 1:
            target = (sizes[:, None] == self.counts_[None, :]).astype(int)
            names = tuple(str(c) for c in self.counts_)
            self.model_ = AdaBoostMH(self.n_estimators).fit(X, target, label_names=names)
        else:
            self.model_ = None
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "counts_")
        if self.model_ is None:
            return np.zeros((len(X), 1))
        return self.model_.decision_function(X)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.counts_[np.argmax(scores, axis=1)]


def top_k_ranked(scores, k) -> List[int]:
    """The ``k`` highest-scoring labels in descending order, ties to the smaller index."""
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    return [int(l) for l in order[:k]]


class MLLVQ(ClassifierMixin, BaseEstimator):
    """Multi-label LVQ classifier with a boosted label-count meta-labeler.

    Features are scaled to [-1, +1] with training statistics inside
    :meth:`fit`; the same map is applied at prediction time.

    Parameters
    ----------
    n_prototypes : int
        Prototypes per (label, polarity), ``S``.
    n_epochs : int
        Passes over the training data, ``M``.
    alpha : float
        Hinge margin.
    eta0 : float or None
        Initial learning rate; None derives it from the k-means fit.
    meta_estimators : int
        Boosting rounds of the meta-labeler.
    random_state : int
    track_loss : bool
        Record the mean training surrogate after every epoch in ``history_``.
    """

    def __init__(self, n_prototypes=1, n_epochs=40, alpha=0.0, eta0=None, meta_estimators=100,
                 random_state=0, track_loss=False):
        self.n_prototypes = n_prototypes
        self.n_epochs = n_epochs
        self.alpha = alpha
        self.eta0 = eta0
        self.meta_estimators = meta_estimators
        self.random_state = random_state
        self.track_loss = track_loss

    def fit(self, X, Y, label_names=None, meta=None):
        X = check_array(X, dtype=float)
        Y = np.asarray(Y, dtype=int)
        if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
            raise ValueError("Y must be an (N, L) indicator matrix matching X")
        self.scaler_ = UnitScaler().fit(X)
        Xs = self.scaler_.transform(X)
        config = LvqTrainConfig(self.n_prototypes, self.n_epochs, self.alpha, self.eta0,
                                self.random_state)
        self.history_ = []
        self.book_ = train_mllvq(Xs, Y, config, labels=label_names,
                                 history=self.history_ if self.track_loss else None)
        # a meta-labeler fitted on the same rows may be shared across grid points
        self.meta_ = meta if meta is not None else MetaLabeler(self.meta_estimators).fit(Xs, Y)
        self.classes_ = np.arange(Y.shape[1])
        self.n_features_in_ = X.shape[1]
        return self

    def _scaled(self, X):
        check_is_fitted(self, "book_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.scaler_.transform(X)

    def decision_function(self, X):
        return self.book_.scores(self._scaled(X))

    def predict_count(self, X):
        return self.meta_.predict(self._scaled(X))

    def predict_ranked(self, X) -> List[List[int]]:
        Xs = self._scaled(X)
        scores = self.book_.scores(Xs)
        ks = self.meta_.predict(Xs)
        return [top_k_ranked(s, min(int(k), len(s))) for s, k in zip(scores, ks)]

    def predict(self, X):
        ranked = self.predict_ranked(X)
        out = np.zeros((len(ranked), self.book_.L), dtype=int)
        for i, r in enumerate(ranked):
            out[i, r] = 1
        return out


def predict_ranked(model: MLLVQ, x) -> List[int]:
    return model.predict_ranked(np.atleast_2d(x))[0]


# --------------------------------------------------------------------------
# Serialisation
# --------------------------------------------------------------------------


def _fmt(v):
    return format(float(v), ".17g")


def dumps_model(model: MLLVQ) -> str:
    check_is_fitted(model, "book_")
    book = model.book_
    lines = [
        FORMAT_HEADER,
        "labels " + "\t".join(book.labels),
        f"S {book.S}",
        f"dim {book.d}",
    ]
    for lo, hi in model.scaler_.scaling_:
        lines.append(f"scale {_fmt(lo)} {_fmt(hi)}")
    for l in range(book.L):
        for pol, name in ((POS, "pos"), (NEG, "neg")):
            for s in range(book.S):
                coords = " ".join(_fmt(v) for v in book.positions[l, pol, s])
                lines.append(f"proto {l} {name} {s} {coords}")
    meta = model.meta_
    lines.append("meta-counts " + " ".join(str(int(c)) for c in meta.counts_))
    if meta.model_ is None:
        lines.append("meta-ensemble 0")
    else:
        body = dumps_ensemble(meta.model_.ensemble_).splitlines()
        lines.append(f"meta-ensemble {len(body)}")
        lines.extend(body)
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> MLLVQ:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ValueError(f"unknown model format: {lines[0] if lines else ''!r}")
    try:
        labels = tuple(lines[1].split(" ", 1)[1].split("\t"))
        S = int(lines[2].split()[1])
        d = int(lines[3].split()[1])
        pos = 4
        scaling = np.array([[float(v) for v in lines[pos + j].split()[1:3]] for j in range(d)])
        pos += d
        L = len(labels)
        P = np.empty((L, 2, S, d))
        for _ in range(L * 2 * S):
            tok = lines[pos].split()
            if tok[0] != "proto":
                raise ValueError(f"bad prototype line at {pos + 1}")
            P[int(tok[1]), POS if tok[2] == "pos" else NEG, int(tok[3])] = [float(v) for v in tok[4:]]
            pos += 1
        counts = np.array([int(v) for v in lines[pos].split()[1:]])
        n_meta = int(lines[pos + 1].split()[1])
        meta_text = "\n".join(lines[pos + 2:pos + 2 + n_meta])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed ml-lvq model file: {exc}") from None

    model = MLLVQ(n_prototypes=S)
    model.scaler_ = UnitScaler.from_scaling(scaling)
    model.book_ = PrototypeBook(P, labels)
    meta = MetaLabeler()
    meta.counts_ = counts
    meta.n_features_in_ = d
    meta.model_ = (
        AdaBoostMH.from_ensemble(loads_ensemble(meta_text + "\n"), d) if n_meta else None
    )
    model.meta_ = meta
    model.classes_ = np.arange(L)
    model.n_features_in_ = d
    model.history_ = []
    return model


__all__ = [
    "LvqTrainConfig", "MLLVQ", "MetaLabeler", "Prototype", "PrototypeBook", "dumps_model",
    "kmeans", "kmeans_init", "loads_model", "mean_nearest_distance", "predict_ranked",
    "rank_loss", "score_labels", "surrogate_gradient", "surrogate_loss", "top_k_ranked",
    "train_mllvq",
]

