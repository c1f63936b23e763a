"""Command-line entry point.

Every subcommand reads an optional flat ``key = value`` config file; flags
given on the command line take precedence, and ``ADULTERANT_OUTPUT_DIR``
overrides the configured output directory unless ``--output-dir`` is set.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional

import numpy as np

from .boosting import FORMAT_HEADER as BOOST_HEADER
from .boosting import TrainingError, dumps_ensemble, loads_ensemble
from .dataset import (DataError, Dataset, LabelSpace, atomic_write_text,
                      label_names_in, load_csv, read_feature_rows, save_csv)
from .experiments import METHODS, GridSpec, fit_method, nested_select, run_protocol
from .metrics import LOW_SUPPORT, RatioBin
from .mllvq import FORMAT_HEADER as LVQ_HEADER
from .mllvq import dumps_model, loads_model
from .synthgen import OILS, GeneratorConfig, generate, save_config, table1_config

ENV_OUTPUT_DIR = "ADULTERANT_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3

KNOWN_KEYS = {
    "data.path", "data.labels", "generator.preset", "generator.d", "generator.noise_sigma",
    "generator.overlap", "generator.seed", "method", "grid.T_binary", "grid.T_multilabel",
    "grid.S", "grid.lvq_epochs", "grid.lvq_alpha", "grid.meta_stumps", "cv.runs", "cv.folds",
    "cv.jobs", "seed", "pca.rule", "output.dir", "model.path", "model.param", "curve.bin_width",
}

# flag destination -> config key
FLAG_KEYS = {
    "data": "data.path", "labels": "data.labels", "preset": "generator.preset",
    "dim": "generator.d", "noise_sigma": "generator.noise_sigma", "overlap": "generator.overlap",
    "method": "method", "runs": "cv.runs", "folds": "cv.folds", "jobs": "cv.jobs",
    "seed": "seed", "pca": "pca.rule", "output_dir": "output.dir", "model": "model.path",
    "param": "model.param", "bin_width": "curve.bin_width", "t_binary": "grid.T_binary",
    "t_multilabel": "grid.T_multilabel", "s_grid": "grid.S",
}


class UsageError(Exception):
    pass


def read_config(path) -> Dict[str, str]:
    cfg: Dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise UsageError(f"{path}:{no}: unknown key {key!r}")
        cfg[key] = value
    return cfg


def resolve(args) -> Dict[str, str]:
    cfg = read_config(args.config) if args.config else {}
    env_dir = os.environ.get(ENV_OUTPUT_DIR)
    if env_dir:
        cfg["output.dir"] = env_dir
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg[key] = str(value)
    return cfg


def _get(cfg, key, conv=str, default=None, required=False):
    if key not in cfg:
        if required:
            raise UsageError(f"missing required setting {key!r}")
        return default
    try:
        return conv(cfg[key])
    except ValueError:
        raise UsageError(f"invalid value for {key!r}: {cfg[key]!r}") from None


def _int_list(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _pca_rule(text):
    if text in ("", "none"):
        return None
    if text == "positive":
        return text
    value = float(text)
    if not 0 < value <= 1:
        raise ValueError(text)
    return value


def _generator_config(cfg) -> GeneratorConfig:
    preset = _get(cfg, "generator.preset", default="table1")
    if preset != "table1":
        raise UsageError(f"unknown generator.preset {preset!r}")
    over = {}
    for key, name, conv in (("generator.d", "d", int), ("generator.noise_sigma", "noise_sigma", float),
                            ("generator.overlap", "overlap", float)):
        if key in cfg:
            over[name] = _get(cfg, key, conv)
    over["seed"] = _get(cfg, "generator.seed", int, default=_get(cfg, "seed", int, default=0))
    try:
        return table1_config(**over)
    except ValueError as exc:
        raise DataError(f"generator: {exc}") from None


def _label_space(cfg, path) -> LabelSpace:
    if "data.labels" in cfg:
        return LabelSpace(tuple(n for n in cfg["data.labels"].replace(",", " ").split()))
    names = label_names_in(path)
    if set(names) <= set(OILS):
        return LabelSpace(OILS)
    return LabelSpace(tuple(sorted(names)))


def _dataset(cfg) -> Dataset:
    """The configured CSV, or a freshly generated set when no path is given."""
    path = cfg.get("data.path")
    if path:
        if not os.path.exists(path):
            raise DataError(f"data file not found: {path}")
        return load_csv(path, _label_space(cfg, path))
    return generate(_generator_config(cfg))


def _output_dir(cfg) -> str:
    out = _get(cfg, "output.dir", default="out")
    os.makedirs(out, exist_ok=True)
    return out


def _grid(cfg) -> GridSpec:
    kw = {}
    for key, name in (("grid.T_binary", "T_binary"), ("grid.T_multilabel", "T_multilabel"),
                      ("grid.S", "S")):
        if key in cfg:
            kw[name] = _get(cfg, key, _int_list)
    kw["lvq_epochs"] = _get(cfg, "grid.lvq_epochs", int, 40)
    kw["lvq_alpha"] = _get(cfg, "grid.lvq_alpha", float, 0.0)
    kw["meta_stumps"] = _get(cfg, "grid.meta_stumps", int, 100)
    kw["pca_rule"] = _get(cfg, "pca.rule", _pca_rule, None)
    try:
        return GridSpec(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _method(cfg) -> str:
    method = _get(cfg, "method", required=True)
    if method not in METHODS:
        raise UsageError(f"method must be one of {', '.join(METHODS)}; got {method!r}")
    return method


def _info(msg):
    print(msg, file=sys.stderr)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_generate(cfg) -> int:
    config = _generator_config(cfg)
    out = _output_dir(cfg)
    data = generate(config)
    csv_path = os.path.join(out, "data.csv")
    save_csv(data, csv_path)
    save_config(config, os.path.join(out, "generator.cfg"))
    _info(f"wrote {data.N} examples to {csv_path}")
    return EXIT_OK


def cmd_train(cfg) -> int:
    method = _method(cfg)
    if _get(cfg, "pca.rule", _pca_rule) is not None:
        raise UsageError("train does not support pca.rule; use cv or pca-sweep")
    data = _dataset(cfg)
    grid = _grid(cfg)
    seed = _get(cfg, "seed", int, 0)
    param = _get(cfg, "model.param", int)
    if param is None:
        param, scores = nested_select(data, grid, method, seed)
        _info(f"selected {param} (validation {scores[param]:.4f})")
    model = fit_method(method, param, data.X, data, grid, seed)
    text = dumps_model(model) if method == "ml-lvq" else dumps_ensemble(model.ensemble_)
    path = _get(cfg, "model.path", default=os.path.join(_output_dir(cfg), "model.txt"))
    atomic_write_text(path, text)
    _info(f"wrote {method} model to {path}")
    return EXIT_OK


def _load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc.strerror}") from None
    header = text.split("\n", 1)[0].strip()
    try:
        if header == BOOST_HEADER:
            return loads_ensemble(text)
        if header == LVQ_HEADER:
            return loads_model(text)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    raise DataError(f"unknown model format version: {header!r}")


def cmd_predict(cfg) -> int:
    model = _load_model(_get(cfg, "model.path", required=True))
    path = _get(cfg, "data.path", required=True)
    if not os.path.exists(path):
        raise DataError(f"data file not found: {path}")
    ids, X = read_feature_rows(path)
    lines = []
    if hasattr(model, "book_"):
        if X.shape[1] != model.n_features_in_:
            raise DataError(f"input has {X.shape[1]} features, model expects {model.n_features_in_}")
        names = model.book_.labels
        scores = model.decision_function(X)
        lines.append("id\tpredicted\tranked\tscores")
        for i, ranked, s in zip(ids, model.predict_ranked(X), scores):
            named = "|".join(names[l] for l in ranked)
            lines.append(f"{i}\t{named}\t{named}\t" + " ".join(repr(float(v)) for v in s))
    else:
        d = int(model.features.max()) + 1 if model.T else 0
        if X.shape[1] < d:
            raise DataError(f"input has {X.shape[1]} features, model uses index {d - 1}")
        scores = model.scores(X)
        if model.task == "binary":
            lines.append("id\tsign\tscore")
            for i, s in zip(ids, scores[:, 0]):
                lines.append(f"{i}\t{'+1' if s > 0 else '-1'}\t{float(s)!r}")
        else:
            lines.append("id\tpredicted\tscores\tflag")
            for i, s in zip(ids, scores):
                pred = "|".join(model.labels[l] for l in np.flatnonzero(s > 0))
                flag = "" if pred else "empty"
                lines.append(f"{i}\t{pred}\t" + " ".join(repr(float(v)) for v in s) + f"\t{flag}")
    out = os.path.join(_output_dir(cfg), "predictions.tsv")
    atomic_write_text(out, "\n".join(lines) + "\n")
    _info(f"wrote {len(ids)} predictions to {out}")
    return EXIT_OK


def _write_cv(report, out):
    fold_dir = os.path.join(out, "folds")
    for f in report.folds:
        atomic_write_text(os.path.join(fold_dir, f"run{f.run:02d}-fold{f.fold:02d}.json"),
                          json.dumps(f.to_dict(), indent=1, sort_keys=True) + "\n")
    atomic_write_text(os.path.join(out, "aggregate.json"), report.to_json())
    atomic_write_text(os.path.join(out, "aggregate.txt"), report.to_text() + report.pooled.to_text())
    atomic_write_text(os.path.join(out, "manifest.json"),
                      json.dumps(report.manifest, indent=1, sort_keys=True) + "\n")


def _cv_report(cfg, data, grid, method):
    return run_protocol(data, grid, method, runs=_get(cfg, "cv.runs", int, 10),
                        k=_get(cfg, "cv.folds", int, 5), seed=_get(cfg, "seed", int, 0),
                        n_jobs=_get(cfg, "cv.jobs", int, 1),
                        bin_width=_get(cfg, "curve.bin_width", float, 0.1))


def cmd_cv(cfg) -> int:
    method = _method(cfg)
    grid = _grid(cfg)
    data = _dataset(cfg)
    report = _cv_report(cfg, data, grid, method)
    if grid.pca_rule is not None:
        for f in report.folds:
            _info(f"run {f.run} fold {f.fold}: pca dims {f.pca_dims}")
    out = _output_dir(cfg)
    _write_cv(report, out)
    _info(f"wrote {len(report.folds)} fold reports and aggregate to {out}")
    return EXIT_OK


SWEEP_RULES = (None, 0.95, 0.98, 0.99, "positive")


def cmd_pca_sweep(cfg) -> int:
    data = _dataset(cfg)
    base = _grid(cfg)
    out = _output_dir(cfg)
    lines = ["pca_rule\tmean_dims\taccuracy_mean\taccuracy_std"]
    for rule in SWEEP_RULES:
        report = _cv_report(cfg, data, replace(base, pca_rule=rule), "binary-boost")
        name = "all" if rule is None else str(rule)
        _write_cv(report, os.path.join(out, f"pca-{name}"))
        dims = [f.pca_dims if f.pca_dims is not None else data.d for f in report.folds]
        acc = report.summary()["accuracy"]
        lines.append(f"{name}\t{np.mean(dims):.1f}\t{acc['mean']!r}\t{acc['std']!r}")
        _info(f"pca {name}: accuracy {acc['mean']:.4f}")
    atomic_write_text(os.path.join(out, "pca_sweep.tsv"), "\n".join(lines) + "\n")
    return EXIT_OK


def merge_curves(curves: List[List[RatioBin]]) -> List[RatioBin]:
    """Combine ratio curves from several reports, weighting bins by support."""
    acc: Dict = {}
    for curve in curves:
        for b in curve:
            hits, n = acc.get((b.lo, b.hi), (0.0, 0))
            acc[(b.lo, b.hi)] = (hits + b.detect_rate * b.support, n + b.support)
    return [RatioBin(lo, hi, hits / n if n else 0.0, n) for (lo, hi), (hits, n) in sorted(acc.items())]


def curve_rows(curve: List[RatioBin]) -> str:
    lines = ["bin_lo\tbin_hi\tdetect_rate\tsupport\tlow_support"]
    for b in curve:
        lines.append(f"{b.lo!r}\t{b.hi!r}\t{b.detect_rate!r}\t{b.support}\t{int(b.support < LOW_SUPPORT)}")
    return "\n".join(lines) + "\n"


def cmd_curve(cfg, reports: List[str]) -> int:
    if not reports:
        raise UsageError("curve needs at least one report file")
    curves = []
    for path in reports:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read report {path}: {exc}") from None
        body = data.get("pooled", data.get("report", data))
        rows = body.get("ratio_curve") if isinstance(body, dict) else None
        if not rows:
            raise DataError(f"{path}: report has no ratio data")
        curves.append([RatioBin(r["lo"], r["hi"], r["detect_rate"], r["support"]) for r in rows])
    out = os.path.join(_output_dir(cfg), "curve.tsv")
    atomic_write_text(out, curve_rows(merge_curves(curves)))
    _info(f"wrote curve to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adulterant", description="Edible-oil adulteration detection toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, data=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", type=int)
        if data:
            p.add_argument("--data", help="dataset CSV (omit to generate the table1 preset)")
            p.add_argument("--labels", help="comma-separated label names")
        return p

    def gen_flags(p):
        p.add_argument("--preset")
        p.add_argument("--dim", type=int)
        p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
        p.add_argument("--overlap", type=float)

    def grid_flags(p):
        p.add_argument("--t-binary", dest="t_binary")
        p.add_argument("--t-multilabel", dest="t_multilabel")
        p.add_argument("--s-grid", dest="s_grid")

    p = common(sub.add_parser("generate", help="write a synthetic dataset"), data=False)
    gen_flags(p)

    p = common(sub.add_parser("train", help="fit one model on a dataset"))
    gen_flags(p)
    grid_flags(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--param", type=int, help="T or S; selected on a holdout when omitted")
    p.add_argument("--model", help="output model path")

    p = common(sub.add_parser("predict", help="apply a saved model"))
    p.add_argument("--model")

    for name, help_text in (("cv", "repeated stratified cross validation"),
                            ("pca-sweep", "binary detector under several PCA rules")):
        p = common(sub.add_parser(name, help=help_text))
        gen_flags(p)
        grid_flags(p)
        if name == "cv":
            p.add_argument("--method", choices=METHODS)
            p.add_argument("--pca")
        p.add_argument("--runs", type=int)
        p.add_argument("--folds", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--bin-width", dest="bin_width", type=float)

    p = common(sub.add_parser("curve", help="detect rate by minor ratio as TSV"), data=False)
    p.add_argument("reports", nargs="*")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required")
        cfg = resolve(args)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "predict":
            return cmd_predict(cfg)
        if args.command == "cv":
            return cmd_cv(cfg)
        if args.command == "pca-sweep":
            return cmd_pca_sweep(cfg)
        return cmd_curve(cfg, args.reports)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
