import csv
import json
import subprocess
import sys

import pytest

from roadfair import cli, harness
from roadfair.data import SYNTHETIC_COLUMNS, local_bias_config, synthesize
from roadfair.trainers import load_model

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")

DATA = "synthetic:n=1200,seed=5"
FAST = ["--epochs", "2", "--batch", "64", "--min-size", "20"]


@pytest.fixture
def model_path(tmp_path, capsys):
    path = tmp_path / "m.txt"
    assert cli.main(["train", "--data", DATA, "--algo", "broad", "--tau", "0.3", *FAST, "--out", str(path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["config.algorithm"] == "broad" and out["config.tau"] == 0.3
    return path


def test_train_saves_model_with_standardizer(model_path):
    model = load_model(model_path)
    assert model.standardizer is not None
    assert model.column_names == SYNTHETIC_COLUMNS


def test_eval_on_csv(model_path, tmp_path):
    ds = synthesize(local_bias_config(n=600, seed=9))
    csv_path = tmp_path / "d.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*ds.column_names, "label", "sensitive"])
        for row, y, s in zip(ds.raw_features, ds.labels, ds.sensitive):
            w.writerow([*row.tolist(), int(y), int(s)])
    out = tmp_path / "rep.json"
    assert cli.main(["eval", "--model", str(model_path), "--data", str(csv_path), "--min-size", "20",
                     "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["worst_1_di"] >= rep["worst_3_di"]
    assert all(v >= 20 for k, v in rep.items() if k.startswith("subgroup_n."))

    assert cli.main(["plotdata", "--kind", "local_di_bars", "--report", str(out), "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "b.csv").read_text().startswith("subgroup_id,n,di,mean_r")


def test_drift_and_subgroups(model_path, tmp_path, capsys):
    assert cli.main(["drift", "--model", str(model_path), "--data", f"base={DATA}",
                     "--data", "shifted=synthetic:n=1200,seed=5,drift_shift=0.5,drifted=1", "--min-size", "20"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"base", "shifted"} and "eo_gap" in out["shifted"]
    assert cli.main(["subgroups", "--model", str(model_path), "--data", DATA, "--min-size", "1"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 12 and rows[4]["population"] == "gender=0"


def test_sweep_then_plotdata(tmp_path, capsys):
    out = tmp_path / "s.jsonl"
    args = ["sweep", "--data", DATA, "--algo", "globalfair,road", "--lambdas", "0,2", "--taus", "0.5", *FAST,
            "--di-budget", "1", "--out", str(out)]
    assert cli.main(args) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["runs"] == 4 and summary["failed"] == 0 and summary["pareto"]
    assert cli.main(args) == 0  # resumed: nothing left to run
    assert json.loads(capsys.readouterr().out)["runs"] == 0
    for kind in ("pareto_xy", "tau_curve"):
        assert cli.main(["plotdata", "--kind", kind, "--records", str(out), "--di-budget", "1",
                         "--out", str(tmp_path / f"{kind}.csv")]) == 0


def test_sweep_exit_code_on_failure(tmp_path, monkeypatch, capsys):
    def broken(data, cfg):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(harness, "train", broken)
    code = cli.main(["sweep", "--data", DATA, "--algo", "globalfair", "--lambdas", "1", *FAST,
                     "--out", str(tmp_path / "s.jsonl")])
    assert code == 1
    assert "diverged" in capsys.readouterr().err


def test_errors_exit_2(tmp_path, capsys):
    assert cli.main(["eval", "--model", str(tmp_path / "missing.txt"), "--data", DATA]) == 2
    assert "error" in capsys.readouterr().err
    assert cli.main(["train", "--data", "synthetic:bogus=1", "--out", str(tmp_path / "m")]) == 2
    with pytest.raises(SystemExit):
        cli.main(["plotdata", "--kind", "tau_curve", "--out", str(tmp_path / "x.csv")])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "roadfair", "--help"], capture_output=True, text=True, check=True)
    for verb in ("train", "sweep", "eval", "drift", "subgroups", "plotdata"):
        assert verb in res.stdout
