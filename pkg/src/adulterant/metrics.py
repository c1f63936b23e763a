"""Bipartition and ranking measures for multi-label predictions.

Bipartition measures (F1 variants, Jaccard accuracy, detect rate) compare
predicted label sets with the truth; ranking measures (one-error, average
precision) use the score vector, ranked by descending score with ties
going to the smaller label index.

Measures are accumulated as exact fractions and rounded once, so results
do not depend on record order.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

MEASURES = ("mac_f1", "mic_f1", "one_error", "avg_prec", "accuracy", "detect_rate",
            "main_ingredient_rate")
LOW_SUPPORT = 5


@dataclass(frozen=True)
class PredictionRecord:
    truth: FrozenSet[int]
    predicted_set: FrozenSet[int]
    scores: Tuple[float, ...]
    truth_ratios: Optional[Dict[int, float]] = None
    ranked: Optional[Tuple[int, ...]] = None
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "truth", frozenset(int(l) for l in self.truth))
        object.__setattr__(self, "predicted_set", frozenset(int(l) for l in self.predicted_set))
        scores = tuple(float(s) for s in self.scores)
        if not all(math.isfinite(s) for s in scores):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "scores", scores)
        if self.ranked is not None:
            ranked = tuple(int(l) for l in self.ranked)
            if len(set(ranked)) != len(ranked):
                raise ValueError("ranked labels must be distinct")
            object.__setattr__(self, "ranked", ranked)

    @property
    def is_mixture(self):
        return len(self.truth) >= 2


def ranking(scores) -> List[int]:
    """Labels by descending score, ties to the smaller index."""
    return [int(l) for l in np.argsort(-np.asarray(scores, dtype=float), kind="stable")]


def micro_f1(records: Sequence[PredictionRecord]) -> float:
    tp = fp = fn = 0
    for r in records:
        tp += len(r.truth & r.predicted_set)
        fp += len(r.predicted_set - r.truth)
        fn += len(r.truth - r.predicted_set)
    denom = 2 * tp + fp + fn
    return float(Fraction(2 * tp, denom)) if denom else 0.0


def macro_f1(records: Sequence[PredictionRecord]) -> float:
    """Per-label F1 averaged over labels that are true or predicted somewhere."""
    counts: Dict[int, List[int]] = {}
    for r in records:
        for l in r.truth | r.predicted_set:
            c = counts.setdefault(l, [0, 0, 0])
            if l in r.truth and l in r.predicted_set:
                c[0] += 1
            elif l in r.predicted_set:
                c[1] += 1
            else:
                c[2] += 1
    if not counts:
        return 0.0
    total = sum((Fraction(2 * tp, 2 * tp + fp + fn) for tp, fp, fn in counts.values()), Fraction(0))
    return float(total / len(counts))


def one_error(records: Sequence[PredictionRecord]) -> float:
    return float(Fraction(sum(ranking(r.scores)[0] not in r.truth for r in records), len(records)))


def average_precision(records: Sequence[PredictionRecord]) -> float:
    total = Fraction(0)
    for r in records:
        rank = {l: i + 1 for i, l in enumerate(ranking(r.scores))}
        acc = Fraction(0)
        for l in r.truth:
            acc += Fraction(sum(1 for m in r.truth if rank[m] <= rank[l]), rank[l])
        total += acc / len(r.truth)
    return float(total / len(records))


def multilabel_accuracy(records: Sequence[PredictionRecord]) -> float:
    """Mean Jaccard similarity of truth and prediction (0/0 counts as 1)."""
    total = Fraction(0)
    for r in records:
        union = r.truth | r.predicted_set
        total += Fraction(len(r.truth & r.predicted_set), len(union)) if union else 1
    return float(total / len(records))


def detect_rate(records: Sequence[PredictionRecord]) -> float:
    return float(Fraction(sum(r.predicted_set == r.truth for r in records), len(records)))


def _main_ingredient_ok(r: PredictionRecord) -> bool:
    top = max(r.truth_ratios.values())
    majors = {l for l, v in r.truth_ratios.items() if v == top}
    return bool(r.ranked) and r.ranked[0] in majors


def main_ingredient_check(records: Sequence[PredictionRecord], missed_only=False):
    """Return ``(rate, failures, excluded)`` over mixture records.

    ``failures`` lists the records whose first ranked label is not a
    component with the largest true fraction; ``excluded`` counts mixture
    records lacking ratios or a ranking. With ``missed_only`` only mixtures
    whose predicted set differs from the truth are considered. The rate is
    1.0 when nothing is eligible.
    """
    ok = 0
    failures = []
    excluded = 0
    for r in records:
        if not r.is_mixture:
            continue
        if missed_only and r.predicted_set == r.truth:
            continue
        if r.truth_ratios is None or r.ranked is None:
            excluded += 1
            continue
        if _main_ingredient_ok(r):
            ok += 1
        else:
            failures.append(r)
    n = ok + len(failures)
    return (ok / n if n else 1.0), failures, excluded


def main_ingredient_rate(records: Sequence[PredictionRecord], missed_only=False) -> float:
    rate, _, excluded = main_ingredient_check(records, missed_only)
    if excluded:
        warnings.warn(f"{excluded} mixture record(s) without ratios or ranking excluded",
                      RuntimeWarning, stacklevel=2)
    return rate


@dataclass(frozen=True)
class RatioBin:
    lo: float
    hi: float
    detect_rate: float
    support: int

    @property
    def low_support(self):
        return self.support < LOW_SUPPORT


def minor_fraction(r: PredictionRecord) -> float:
    if not r.is_mixture:
        return 0.0
    return min(r.truth_ratios.values())


def detect_rate_by_ratio(records: Sequence[PredictionRecord], bin_width=0.1,
                         edges: Optional[Sequence[Tuple[float, float]]] = None) -> List[RatioBin]:
    """Detect rate per minor-component fraction bin.

    Pure records form a dedicated ``[0, 0]`` bin. By default mixtures fall
    into half-open bins ``[k w, (k+1) w)``; explicit closed ``edges``
    replace the regular grid (pure records are then only counted by a bin
    that contains 0). Mixtures without ratios are skipped.
    """
    if edges is not None:
        out = []
        for lo, hi in edges:
            hits = [r.predicted_set == r.truth for r in records
                    if (r.truth_ratios is not None or not r.is_mixture)
                    and lo <= minor_fraction(r) <= hi]
            out.append(RatioBin(lo, hi, float(np.mean(hits)) if hits else 0.0, len(hits)))
        return out

    bins: Dict[int, List[bool]] = {}
    for r in records:
        if r.is_mixture and r.truth_ratios is None:
            continue
        key = -1 if not r.is_mixture else int(math.floor(minor_fraction(r) / bin_width + 1e-12))
        bins.setdefault(key, []).append(r.predicted_set == r.truth)
    out = []
    for key in sorted(bins):
        hits = bins[key]
        lo, hi = (0.0, 0.0) if key < 0 else (round(key * bin_width, 12), round((key + 1) * bin_width, 12))
        out.append(RatioBin(lo, hi, float(np.mean(hits)), len(hits)))
    return out


@dataclass
class EvaluationReport:
    mac_f1: float
    mic_f1: float
    one_error: float
    avg_prec: float
    accuracy: float
    detect_rate: float
    main_ingredient_rate: float
    ratio_curve: List[RatioBin] = field(default_factory=list)

    def measures(self) -> Dict[str, float]:
        return {k: getattr(self, k) for k in MEASURES}

    def to_text(self) -> str:
        lines = [f"{k}={v!r}" for k, v in self.measures().items()]
        for b in self.ratio_curve:
            lines.append(f"ratio_bin={b.lo!r},{b.hi!r} detect_rate={b.detect_rate!r} "
                         f"support={b.support}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "measures": [{"name": k, "value": v} for k, v in self.measures().items()],
            "ratio_curve": [
                {"lo": b.lo, "hi": b.hi, "detect_rate": b.detect_rate, "support": b.support,
                 "low_support": b.low_support}
                for b in self.ratio_curve
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data) -> "EvaluationReport":
        m = {row["name"]: row["value"] for row in data["measures"]}
        curve = [RatioBin(b["lo"], b["hi"], b["detect_rate"], b["support"])
                 for b in data.get("ratio_curve", [])]
        return cls(**{k: m[k] for k in MEASURES}, ratio_curve=curve)


def evaluate(records: Sequence[PredictionRecord], bin_width=0.1) -> EvaluationReport:
    if not records:
        raise ValueError("need at least one prediction record")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mir = main_ingredient_rate(records)
    return EvaluationReport(
        mac_f1=macro_f1(records),
        mic_f1=micro_f1(records),
        one_error=one_error(records),
        avg_prec=average_precision(records),
        accuracy=multilabel_accuracy(records),
        detect_rate=detect_rate(records),
        main_ingredient_rate=mir,
        ratio_curve=detect_rate_by_ratio(records, bin_width),
    )


def records_to_dicts(records: Sequence[PredictionRecord]) -> List[dict]:
    out = []
    for r in records:
        d = asdict(r)
        d["truth"] = sorted(r.truth)
        d["predicted_set"] = sorted(r.predicted_set)
        d["scores"] = list(r.scores)
        d["ranked"] = list(r.ranked) if r.ranked is not None else None
        d["truth_ratios"] = ({str(k): v for k, v in sorted(r.truth_ratios.items())}
                             if r.truth_ratios is not None else None)
        out.append(d)
    return out
