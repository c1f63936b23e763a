import json

import pytest

from adulterant.cli import main

FAST = ["--dim", "40", "--t-binary", "5,10", "--t-multilabel", "5", "--s-grid", "1"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def data_csv(tmp_path):
    out = tmp_path / "gen"
    assert run("generate", "--preset", "table1", "--seed", 7, "--dim", 40, "--output-dir", out) == 0
    return out / "data.csv"


def test_generate_writes_csv_and_config(tmp_path):
    out = tmp_path / "new" / "dir"
    assert run("generate", "--preset", "table1", "--seed", 7, "--output-dir", out) == 0
    lines = (out / "data.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 371
    cfg = (out / "generator.cfg").read_text(encoding="utf-8")
    assert "seed = 7" in cfg


def test_bad_noise_names_the_key(tmp_path, capsys):
    code = run("generate", "--noise-sigma", -1, "--output-dir", tmp_path)
    assert code != 0
    assert "noise_sigma" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert run() == 1
    assert run("cv", "--method", "svm") == 1
    cfg = tmp_path / "c.cfg"
    cfg.write_text("bogus.key = 1\n", encoding="utf-8")
    assert run("cv", "--config", cfg) == 1
    assert "unknown key" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"generator.d = 30\nseed = 3\noutput.dir = {tmp_path / 'from_cfg'}\n",
                   encoding="utf-8")
    assert run("generate", "--config", cfg, "--seed", 4) == 0
    text = (tmp_path / "from_cfg" / "generator.cfg").read_text(encoding="utf-8")
    assert "seed = 4" in text and "d = 30" in text
    monkeypatch.setenv("ADULTERANT_OUTPUT_DIR", str(tmp_path / "from_env"))
    assert run("generate", "--config", cfg) == 0
    assert (tmp_path / "from_env" / "data.csv").exists()
    assert run("generate", "--config", cfg, "--output-dir", tmp_path / "flag") == 0
    assert (tmp_path / "flag" / "data.csv").exists()


def test_missing_data_file_is_data_error(tmp_path):
    assert run("cv", "--method", "ml-boost", "--data", tmp_path / "nope.csv") == 2


@pytest.mark.parametrize("method", ["binary-boost", "ml-boost", "ml-lvq"])
def test_train_then_predict(tmp_path, data_csv, method):
    model = tmp_path / "model.txt"
    assert run("train", "--method", method, "--data", data_csv, "--model", model, *FAST) == 0
    out = tmp_path / "pred"
    assert run("predict", "--model", model, "--data", data_csv, "--output-dir", out) == 0
    rows = (out / "predictions.tsv").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 371
    if method == "binary-boost":
        assert rows[0] == "id\tsign\tscore"
        assert rows[1].split("\t")[1] in ("+1", "-1")
    elif method == "ml-lvq":
        first = rows[1].split("\t")
        assert first[0].startswith("r00-") and first[2] != ""


def test_predict_rejects_unknown_model(tmp_path, data_csv):
    bad = tmp_path / "m.txt"
    bad.write_text("something 3\n", encoding="utf-8")
    assert run("predict", "--model", bad, "--data", data_csv, "--output-dir", tmp_path) == 2


def test_cv_outputs_and_determinism(tmp_path, data_csv):
    args = ["cv", "--method", "ml-boost", "--data", data_csv, "--runs", 2, "--folds", 3, *FAST]
    assert run(*args, "--output-dir", tmp_path / "a") == 0
    assert run(*args, "--output-dir", tmp_path / "b") == 0
    a = (tmp_path / "a" / "aggregate.json").read_bytes()
    assert a == (tmp_path / "b" / "aggregate.json").read_bytes()
    assert len(list((tmp_path / "a" / "folds").iterdir())) == 6
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["method"] == "ml-boost"

    assert run("curve", tmp_path / "a" / "aggregate.json", "--output-dir", tmp_path / "c") == 0
    rows = (tmp_path / "c" / "curve.tsv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "bin_lo\tbin_hi\tdetect_rate\tsupport\tlow_support"
    assert rows[1].startswith("0.0\t0.0\t")


def test_cv_with_pca_logs_dims(tmp_path, data_csv, capsys):
    assert run("cv", "--method", "binary-boost", "--pca", "0.99", "--data", data_csv, "--runs", 1,
               "--folds", 3, *FAST, "--output-dir", tmp_path) == 0
    assert "pca dims" in capsys.readouterr().err


def test_pca_sweep(tmp_path, data_csv):
    assert run("pca-sweep", "--data", data_csv, "--runs", 1, "--folds", 3, *FAST,
               "--output-dir", tmp_path) == 0
    rows = (tmp_path / "pca_sweep.tsv").read_text(encoding="utf-8").splitlines()
    assert [r.split("\t")[0] for r in rows[1:]] == ["all", "0.95", "0.98", "0.99", "positive"]


def test_curve_needs_ratio_data(tmp_path):
    p = tmp_path / "r.json"
    p.write_text('{"pooled": {"ratio_curve": []}}', encoding="utf-8")
    assert run("curve", p, "--output-dir", tmp_path) == 2
    assert run("curve", "--output-dir", tmp_path) == 1
