"""Covariance PCA with cumulative-variance component selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

ZERO_TOL = 1e-12
POSITIVE = "positive"


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows orthonormal
    eigenvalues: np.ndarray  # (k,), non-increasing

    @property
    def n_components(self):
        return self.components.shape[0]

    def explained_ratio(self):
        total = self.eigenvalues.sum()
        if total == 0:
            return np.ones(self.n_components)
        return np.cumsum(self.eigenvalues) / total


def fit_pca(X) -> PcaModel:
    """Eigendecomposition of the 1/(N-1) covariance through a thin SVD.

    At most ``min(N-1, d)`` components are kept. Eigenvalues below
    ``1e-12`` times the largest are set to zero. Each component is signed
    so that its largest-magnitude entry is positive.
    """
    X = check_array(X, dtype=float)
    N, d = X.shape
    if N < 2:
        raise ValueError("PCA needs at least two examples")
    mean = X.mean(axis=0)
    _, s, Vt = np.linalg.svd(X - mean, full_matrices=False)
    k = min(N - 1, d)
    Vt, s = Vt[:k], s[:k]
    eig = s ** 2 / (N - 1)
    if eig.size and eig[0] > 0:
        eig[eig < ZERO_TOL * eig[0]] = 0.0
    else:
        eig[:] = 0.0
    pivot = np.argmax(np.abs(Vt), axis=1)
    signs = np.sign(Vt[np.arange(k), pivot])
    signs[signs == 0] = 1.0
    return PcaModel(mean, Vt * signs[:, None], eig)


def select_components(model: PcaModel, rule: Union[float, str]) -> int:
    """Number of leading components for a variance threshold or ``"positive"``."""
    if rule == POSITIVE:
        return int(np.count_nonzero(model.eigenvalues > 0))
    threshold = float(rule)
    if not 0 < threshold <= 1:
        raise ValueError(f"variance threshold must lie in (0, 1], got {rule!r}")
    ratio = model.explained_ratio()
    # guard the final entry against rounding just below 1
    ratio[-1] = 1.0
    return int(np.searchsorted(ratio, threshold - 1e-15) + 1)


def project(model: PcaModel, X, m: int) -> np.ndarray:
    if not 0 <= m <= model.n_components:
        raise ValueError(f"m={m} outside [0, {model.n_components}]")
    X = np.asarray(X, dtype=float)
    return (X - model.mean) @ model.components[:m].T


def reconstruct(model: PcaModel, Z) -> np.ndarray:
    Z = np.atleast_2d(Z)
    m = Z.shape[1]
    return model.mean + Z @ model.components[:m]


class PCAProjector(TransformerMixin, BaseEstimator):
    """Fit PCA and keep the components selected by ``rule``.

    ``rule`` is a cumulative variance threshold such as 0.99, or
    ``"positive"`` for every component with a non-zero eigenvalue.
    """

    def __init__(self, rule=0.99):
        self.rule = rule

    def fit(self, X, y=None):
        self.model_ = fit_pca(X)
        self.n_components_ = max(select_components(self.model_, self.rule), 1)
        self.n_features_in_ = self.model_.mean.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return project(self.model_, X, self.n_components_)


def dumps_pca(model: PcaModel) -> str:
    f = lambda v: format(float(v), ".17g")  # noqa: E731
    lines = ["pca 1", f"dim {model.mean.size}", f"components {model.n_components}",
             "mean " + " ".join(f(v) for v in model.mean),
             "eigenvalues " + " ".join(f(v) for v in model.eigenvalues)]
    lines += ["component " + " ".join(f(v) for v in row) for row in model.components]
    return "\n".join(lines) + "\n"


def loads_pca(text: str) -> PcaModel:
    lines = text.splitlines()
    if not lines or lines[0] != "pca 1":
        raise ValueError("unknown PCA model format")
    k = int(lines[2].split()[1])
    mean = np.array([float(v) for v in lines[3].split()[1:]])
    eig = np.array([float(v) for v in lines[4].split()[1:]])
    comps = np.array([[float(v) for v in line.split()[1:]] for line in lines[5:5 + k]])
    return PcaModel(mean, comps.reshape(k, mean.size), eig)
