"""Boosting and prototype-based multi-label models for mixture detection.

Answers three questions about a sample: is it a mixture, which
components does it contain, and which component dominates.
"""

__version__ = "0.1.0"

from .boosting import AdaBoostMH, StumpEnsemble, train_adaboost_mh  # noqa: E402
from .dataset import Dataset, Example, LabelSpace, UnitScaler, load_csv, save_csv  # noqa: E402
from .metrics import EvaluationReport, PredictionRecord, evaluate  # noqa: E402
from .mllvq import MLLVQ, LvqTrainConfig, MetaLabeler, train_mllvq  # noqa: E402
from .pca import PCAProjector, fit_pca  # noqa: E402

__all__ = [
    "AdaBoostMH", "Dataset", "EvaluationReport", "Example", "LabelSpace", "LvqTrainConfig",
    "MLLVQ", "MetaLabeler", "PCAProjector", "PredictionRecord", "StumpEnsemble", "UnitScaler",
    "evaluate", "fit_pca", "load_csv", "save_csv", "train_adaboost_mh", "train_mllvq",
]
