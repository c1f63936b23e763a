"""Repeated stratified k-fold evaluation with nested model selection.

For every run the data is split into k folds stratified by label set. On
each training part a single stratified 2/3 - 1/3 split picks the
hyper-parameter from the grid (accuracy for the binary detector, micro-F1
otherwise); the model is then refitted on the whole training part and
evaluated on the held-out fold.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .boosting import AdaBoostMH, TrainingError
from .dataset import Dataset, UnitScaler, binary_targets, dumps_csv
from .metrics import (MEASURES, EvaluationReport, PredictionRecord, detect_rate_by_ratio,
                      evaluate, micro_f1)
from .mllvq import MLLVQ, MetaLabeler, top_k_ranked
from .pca import PCAProjector

METHODS = ("binary-boost", "ml-boost", "ml-lvq")
BINARY_SPACE = ("pure", "adulterant")


@dataclass(frozen=True)
class GridSpec:
    T_binary: Tuple[int, ...] = (100, 200, 300, 400, 500)
    T_multilabel: Tuple[int, ...] = (20, 40, 60, 80, 100)
    S: Tuple[int, ...] = (1, 3, 5, 7, 9)
    pca_rule: Optional[Union[float, str]] = None
    lvq_epochs: int = 40
    lvq_alpha: float = 0.0
    meta_stumps: int = 100

    def __post_init__(self):
        for name in ("T_binary", "T_multilabel", "S"):
            values = tuple(int(v) for v in getattr(self, name))
            if not values or min(values) < 1:
                raise ValueError(f"grid {name} must be a non-empty list of positive integers")
            object.__setattr__(self, name, tuple(sorted(set(values))))

    def values(self, method):
        return {"binary-boost": self.T_binary, "ml-boost": self.T_multilabel,
                "ml-lvq": self.S}[method]

    def to_dict(self):
        return {"T_binary": list(self.T_binary), "T_multilabel": list(self.T_multilabel),
                "S": list(self.S), "pca_rule": self.pca_rule, "lvq_epochs": self.lvq_epochs,
                "lvq_alpha": self.lvq_alpha, "meta_stumps": self.meta_stumps}


@dataclass(frozen=True)
class FoldAssignment:
    run: int
    fold: int
    test_idx: np.ndarray
    train_idx: np.ndarray
    test_ids: Tuple[str, ...] = ()
    train_ids: Tuple[str, ...] = ()


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def powerset_keys(dataset: Dataset) -> List[Tuple[int, ...]]:
    return [tuple(sorted(ex.labels)) for ex in dataset.examples]


def stratified_folds(keys: Sequence, k: int, seed) -> List[np.ndarray]:
    """Test indices of ``k`` folds, stratified by the class key of each row.

    Members of every class are shuffled and dealt round-robin. Dealing
    continues across classes from a seeded starting fold, so a class with
    fewer than ``k`` members lands in distinct folds and fold sizes stay
    balanced.
    """
    n = len(keys)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of examples ({n})")
    rng = np.random.default_rng(seed)
    groups: Dict = {}
    for i, key in enumerate(keys):
        groups.setdefault(key, []).append(i)
    folds: List[List[int]] = [[] for _ in range(k)]
    pos = int(rng.integers(k))
    for key in sorted(groups):
        members = np.array(groups[key])
        for i in rng.permutation(members):
            folds[pos].append(int(i))
            pos = (pos + 1) % k
    return [np.array(sorted(f), dtype=int) for f in folds]


def stratified_kfold(dataset: Dataset, k: int, seed, run: int = 0) -> List[FoldAssignment]:
    tests = stratified_folds(powerset_keys(dataset), k, seed)
    ids = dataset.ids
    out = []
    for f, test in enumerate(tests):
        train = np.setdiff1d(np.arange(dataset.N), test)
        out.append(FoldAssignment(run, f, test, train, tuple(ids[i] for i in test),
                                  tuple(ids[i] for i in train)))
    return out


def holdout_split(dataset: Dataset, seed) -> Tuple[np.ndarray, np.ndarray]:
    """Stratified split keeping about 2/3 for fitting and 1/3 for validation."""
    val = stratified_folds(powerset_keys(dataset), 3, seed)[0]
    fit = np.setdiff1d(np.arange(dataset.N), val)
    return fit, val


# --------------------------------------------------------------------------
# Per-method fitting and prediction
# --------------------------------------------------------------------------


def _with_pca(rule, X_fit, X_other):
    if rule is None:
        return X_fit, X_other, None
    proj = PCAProjector(rule).fit(X_fit)
    return proj.transform(X_fit), [proj.transform(X) for X in X_other], proj


def _records(method, model, X, part: Dataset) -> List[PredictionRecord]:
    out = []
    if method == "binary-boost":
        f = model.decision_function(X)
        for ex, s in zip(part.examples, f):
            truth = {1} if ex.is_mixture else {0}
            pred = 1 if s > 0 else 0
            out.append(PredictionRecord(truth, {pred}, (-s, s), None, (pred,), ex.id))
    elif method == "ml-boost":
        F = model.decision_function(X)
        for ex, s in zip(part.examples, F):
            pred = [l for l in top_k_ranked(s, len(s)) if s[l] > 0]
            out.append(PredictionRecord(ex.labels, pred, s, ex.ratios, tuple(pred), ex.id))
    else:
        F = model.decision_function(X)
        ranked = model.predict_ranked(X)
        for ex, s, r in zip(part.examples, F, ranked):
            out.append(PredictionRecord(ex.labels, r, s, ex.ratios, tuple(r), ex.id))
    return out


def fit_method(method, param, X, part: Dataset, grid: GridSpec, seed, meta=None):
    names = part.space.names
    if method == "binary-boost":
        return AdaBoostMH(param).fit(X, binary_targets(part), label_names=("adulterant",))
    if method == "ml-boost":
        return AdaBoostMH(param).fit(X, part.indicator(), label_names=names)
    model = MLLVQ(n_prototypes=param, n_epochs=grid.lvq_epochs, alpha=grid.lvq_alpha,
                  meta_estimators=grid.meta_stumps, random_state=seed)
    return model.fit(X, part.indicator(), label_names=names, meta=meta)


def nested_select(train: Dataset, grid: GridSpec, method: str, seed) -> Tuple[int, Dict[int, float]]:
    """Pick the grid value with the best validation score (ties to the smallest).

    Returns the chosen value and the validation score of every grid point
    that trained successfully.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    values = grid.values(method)
    fit_idx, val_idx = holdout_split(train, _seed(seed, 0))
    fit_part, val_part = train.subset(fit_idx), train.subset(val_idx)
    X_fit, (X_val,), _ = _with_pca(grid.pca_rule, fit_part.X, [val_part.X])
    scores: Dict[int, float] = {}

    if method in ("binary-boost", "ml-boost"):
        # boosting is sequential, so every T in the grid is a prefix of the longest run
        try:
            model = fit_method(method, max(values), X_fit, fit_part, grid, seed)
        except TrainingError as exc:
            raise TrainingError(f"every grid point failed to train: {exc}") from exc
        staged = model.ensemble_.staged_scores(X_val)
        for T in values:
            F = staged[:, T - 1, :]
            if method == "binary-boost":
                truth = binary_targets(val_part) > 0
                scores[T] = float(np.mean((F[:, 0] > 0) == truth))
            else:
                recs = [PredictionRecord(ex.labels, np.flatnonzero(f > 0), f)
                        for ex, f in zip(val_part.examples, F)]
                scores[T] = micro_f1(recs)
    else:
        meta = MetaLabeler(grid.meta_stumps)
        meta.fit(UnitScaler().fit_transform(X_fit), fit_part.indicator())
        for S in values:
            try:
                model = fit_method(method, S, X_fit, fit_part, grid, _seed(seed, 1), meta=meta)
            except (TrainingError, ValueError) as exc:
                warnings.warn(f"grid point S={S} skipped: {exc}", RuntimeWarning, stacklevel=2)
                continue
            recs = _records(method, model, X_val, val_part)
            scores[S] = micro_f1(recs)
    if not scores:
        raise TrainingError("every grid point failed to train")
    best = max(scores.values())
    return min(v for v, s in scores.items() if s == best), scores


# --------------------------------------------------------------------------
# Protocol
# --------------------------------------------------------------------------


@dataclass
class FoldResult:
    run: int
    fold: int
    selected: int
    validation: Dict[int, float]
    report: EvaluationReport
    records: List[PredictionRecord]
    n_train: int
    n_test: int
    pca_dims: Optional[int] = None
    artifacts: Dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        out = {
            "run": self.run, "fold": self.fold, "selected": self.selected,
            "validation": {str(k): v for k, v in sorted(self.validation.items())},
            "n_train": self.n_train, "n_test": self.n_test, "report": self.report.to_dict(),
        }
        if self.pca_dims is not None:
            out["pca_dims"] = self.pca_dims
        return out


@dataclass
class CvReport:
    method: str
    folds: List[FoldResult]
    pooled: EvaluationReport
    manifest: Dict

    def summary(self) -> Dict[str, Dict[str, float]]:
        out = {}
        for m in MEASURES:
            vals = np.array([getattr(f.report, m) for f in self.folds])
            out[m] = {"mean": float(vals.mean()),
                      "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
        return out

    @property
    def records(self) -> List[PredictionRecord]:
        return [r for f in self.folds for r in f.records]

    def to_dict(self):
        return {"method": self.method, "summary": self.summary(),
                "pooled": self.pooled.to_dict(), "folds": [f.to_dict() for f in self.folds]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"method={self.method}", f"folds={len(self.folds)}"]
        for m, s in self.summary().items():
            lines.append(f"{m}.mean={s['mean']!r}")
            lines.append(f"{m}.std={s['std']!r}")
        return "\n".join(lines) + "\n"


def dataset_digest(dataset: Dataset) -> str:
    return hashlib.sha256(dumps_csv(dataset).encode("utf-8")).hexdigest()


def _run_fold(dataset: Dataset, assignment: FoldAssignment, grid: GridSpec, method: str,
              seed: int, bin_width: float) -> FoldResult:
    train = dataset.subset(assignment.train_idx)
    test = dataset.subset(assignment.test_idx)
    fold_seed = _seed(seed, assignment.run, assignment.fold)
    selected, validation = nested_select(train, grid, method, fold_seed)
    X_train, (X_test,), proj = _with_pca(grid.pca_rule, train.X, [test.X])
    model = fit_method(method, selected, X_train, train, grid, _seed(fold_seed, 2))
    records = _records(method, model, X_test, test)
    artifacts = {}
    if proj is not None:
        artifacts["pca"] = proj.model_
    if method == "ml-lvq":
        artifacts["scaling"] = model.scaler_.scaling_
    return FoldResult(assignment.run, assignment.fold, selected, validation,
                      evaluate(records, bin_width), records, len(train.examples),
                      len(test.examples), proj.n_components_ if proj is not None else None,
                      artifacts)


def run_protocol(dataset: Dataset, grid: GridSpec, method: str, runs: int = 10, k: int = 5,
                 seed: int = 0, n_jobs: int = 1, bin_width: float = 0.1) -> CvReport:
    """``runs`` repetitions of stratified ``k``-fold CV with nested selection.

    Fold tasks are independent and may run in parallel; results are
    reduced in (run, fold) order so the report does not depend on
    ``n_jobs``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    tasks = []
    for r in range(runs):
        tasks.extend(stratified_kfold(dataset, k, _seed(seed, r), run=r))
    fold_results = Parallel(n_jobs=n_jobs)(
        delayed(_run_fold)(dataset, a, grid, method, seed, bin_width) for a in tasks)
    pooled = [rec for f in fold_results for rec in f.records]
    manifest = {
        "method": method, "seed": seed, "runs": runs, "folds": k, "grid": grid.to_dict(),
        "dataset_sha256": dataset_digest(dataset), "n_examples": dataset.N, "dim": dataset.d,
        "labels": list(dataset.space.names), "version": __version__,
    }
    return CvReport(method, fold_results, evaluate(pooled, bin_width), manifest)


def ratio_curve(report: CvReport, edges=None, bin_width=0.1):
    return detect_rate_by_ratio(report.records, bin_width, edges)
