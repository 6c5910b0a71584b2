import json

import numpy as np
import pytest

from kandkd import cli
from kandkd import config as C
from kandkd.data import Dataset, gen_synthetic, load_dataset, save_dataset
from kandkd.kan import kan_init
from kandkd.store import save_model


@pytest.fixture
def prepared(tmp_path):
    csv = tmp_path / "syn.csv"
    assert cli.main(["gen-synthetic", str(csv), "--n-normal", "940", "--n-attack", "60", "--features", "6"]) == 0
    out = tmp_path / "prep"
    assert cli.main(["prepare", str(csv), "--label-column", "Normal/Attack", "-o", str(out)]) == 0
    return out


def _kv(path):
    return dict(line.split("=", 1) for line in path.read_text().splitlines())


def test_prepare_wadi_fixture(wadi_csv, tmp_path, capsys):
    path, _ = wadi_csv
    code = cli.main(["prepare", str(path), "--label-column", "Attack LABLE (1:No Attack -1:Attack)", "-o", str(tmp_path / "o")])
    assert code == 0
    out = capsys.readouterr().out
    assert "nan-only: 4" in out and "features retained: 123" in out
    assert load_dataset(tmp_path / "o" / "train.kdds").n_features == 123


def test_prepare_missing_label_column(wadi_csv, tmp_path, capsys):
    path, _ = wadi_csv
    assert cli.main(["prepare", str(path), "--label-column", "label", "-o", str(tmp_path)]) == cli.EXIT_USAGE
    assert "label column" in capsys.readouterr().err


def test_prepare_is_byte_identical(wadi_csv, tmp_path):
    path, _ = wadi_csv
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        cli.main(["prepare", str(path), "--label-column", "Attack LABLE (1:No Attack -1:Attack)", "-o", str(d), "--split", "shuffled", "--seed", "3"])
        outs.append([(d / f).read_bytes() for f in ("train.kdds", "test.kdds", "dropped_columns.tsv")])
    assert outs[0] == outs[1]


def test_prepare_bad_cell_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,label\n1,2,Normal\n3,x,Attack\n4,5,Normal\n")
    assert cli.main(["prepare", str(p), "--label-column", "label", "-o", str(tmp_path)]) == cli.EXIT_DATA
    assert "line(s) 3" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert cli.main(["prepare", str(tmp_path / "nope.csv"), "--label-column", "x"]) == cli.EXIT_MISSING
    assert cli.main(["eval", "--model", str(tmp_path / "m"), "--data", str(tmp_path / "d")]) == cli.EXIT_MISSING


@pytest.mark.parametrize(
    "preset,expected",
    [
        ("wadi", dict(grid=50, order=1, alpha=5.0, beta=1.0, lam=0.2, warmup=5, student=[123, 20, 2])),
        ("swat", dict(grid=50, order=3, alpha=5.0, beta=1.0, lam=0.1, warmup=80, student=[51, 30, 2])),
    ],
)
def test_presets(preset, expected, capsys):
    cfg = C.resolve(preset)
    assert (cfg["grid"], cfg["order"], cfg["alpha"], cfg["beta"], cfg["lambda"], cfg["warmup"]) == (
        expected["grid"], expected["order"], expected["alpha"], expected["beta"], expected["lam"], expected["warmup"]
    )
    n = C.PRESETS[preset]["n_features"]
    assert C.student_dims(cfg, n) == expected["student"]
    assert cli.main(["show-config", "--preset", preset]) == 0
    assert f"student_dims = {expected['student']}" in capsys.readouterr().out


def test_config_precedence(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# overrides\nwarmup = 9\nlambda = 0.4\nstudent_hidden = 7, 5\n")
    cfg = C.resolve("swat", f, {"lambda": 0.05, "warmup": None})
    assert cfg["lambda"] == 0.05  # flag beats file
    assert cfg["warmup"] == 9  # file beats preset
    assert cfg["order"] == 3  # preset beats default
    assert cfg["temperature"] == 4.0  # default
    assert cfg["student_hidden"] == [7, 5]
    f.write_text("bogus = 1\n")
    with pytest.raises(C.ConfigError):
        C.resolve(None, f)


def test_full_pipeline_and_manifest(prepared, tmp_path, capsys):
    run = tmp_path / "run"
    common = ["--train", str(prepared / "train.kdds"), "--test", str(prepared / "test.kdds"), "-o", str(run), "--epochs", "3"]
    assert cli.main(["train-teacher", *common, "--grid", "6", "--teacher-hidden", "5"]) == 0
    assert cli.main(["train-student", *common, "--student-hidden", "4"]) == 0
    assert cli.main(["distill", *common, "--teacher", str(run / "teacher.kdkd"), "--student-hidden", "4", "--lambda", "0.3"]) == 0
    manifest = json.loads((run / "dkd_student_manifest.json").read_text())
    assert manifest["config"]["lambda"] == 0.3 and manifest["seed"] == 0
    assert set(manifest["inputs"]) == {str(prepared / "train.kdds"), str(run / "teacher.kdkd"), str(prepared / "test.kdds")}
    history = (run / "dkd_student_history.csv").read_text().splitlines()
    assert history[0].startswith("epoch,hard_loss,dkd_loss,warmup_weight") and len(history) == 4
    # eval on the manifest's data reproduces the logged metrics exactly
    capsys.readouterr()
    assert cli.main(["eval", "--model", str(run / "dkd_student.kdkd"), "--data", str(prepared / "test.kdds"), "-o", str(run)]) == 0
    out = capsys.readouterr().out
    assert "F1 (%)" in out and "Params" in out
    assert _kv(run / "dkd_student_eval_metrics.txt") == _kv(run / "dkd_student_metrics.txt")
    emb = run / "emb.csv"
    assert cli.main(["export-embeddings", "--model", str(run / "teacher.kdkd"), "--data", str(prepared / "test.kdds"), str(emb)]) == 0
    assert emb.read_text().splitlines()[0] == "e0,e1,e2,e3,e4,label"


def test_manifest_written_before_training(prepared, tmp_path, monkeypatch):
    def boom(*a, **k):
        from kandkd.train import DivergenceError

        raise DivergenceError(0, 0, float("nan"))

    monkeypatch.setattr(cli, "train_teacher", boom)
    run = tmp_path / "run"
    code = cli.main(["train-teacher", "--train", str(prepared / "train.kdds"), "-o", str(run)])
    assert code == cli.EXIT_DIVERGENCE
    assert (run / "teacher_manifest.json").exists()


def test_incompatible_dims(prepared, tmp_path):
    wrong = save_model(kan_init([3, 2], dict(grid_size=3, order=1)), tmp_path / "k.kdkd")
    assert cli.main(["eval", "--model", str(wrong), "--data", str(prepared / "test.kdds")]) == cli.EXIT_MODEL
    assert cli.main(["distill", "--teacher", str(wrong), "--train", str(prepared / "train.kdds"), "-o", str(tmp_path)]) == cli.EXIT_MODEL
    assert cli.main(["train-teacher", "--preset", "wadi", "--train", str(prepared / "train.kdds"), "-o", str(tmp_path)]) == cli.EXIT_MODEL


def test_output_dir_env(prepared, tmp_path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv(cli.OUTPUT_ENV, str(target))
    assert cli.main(["train-student", "--train", str(prepared / "train.kdds"), "--epochs", "1"]) == 0
    assert (target / "student.kdkd").exists()


def test_eval_untrained_model_is_chance_level(tmp_path):
    # a single random init can correlate with the shifted attack features; the
    # init is sign-symmetric in the output layer, so chance level is its mean
    ds = gen_synthetic(1000, 1000, 10, seed=0)
    z = (ds.features - ds.features.mean(0)) / ds.features.std(0)
    data = save_dataset(Dataset(z, ds.labels, ds.feature_names), tmp_path / "bal.kdds")
    accs = []
    for seed in range(20):
        model = save_model(kan_init([10, 8, 2], dict(grid_size=10, order=1), seed=seed), tmp_path / "rand.kdkd")
        assert cli.main(["eval", "--model", str(model), "--data", str(data), "-o", str(tmp_path)]) == 0
        accs.append(float(_kv(tmp_path / "rand_eval_metrics.txt")["accuracy"]))
    assert abs(np.mean(accs) - 0.5) <= 0.05
