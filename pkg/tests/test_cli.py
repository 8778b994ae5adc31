import json
import subprocess
import sys

import numpy as np
import pytest

from ltu import experiment as ex
from ltu.cli import main
from ltu.data import load_csv

CONFIG = """
[dataset]
n_per_class = 30
n_classes = 3
n_test = 30
n_train = 0

[model]
hidden = [8]
epochs = 5

[ltu]
iterations = 4
batch_support = 8
batch_query = 8
k = 8

[baselines]
methods = ["ltu", "ft"]
ft_epochs = 1

[runs]
seeds = [0]
mi_max_steps = 20
out_dir = "runs"
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text(CONFIG)
    return p


def _staged(cmd, config, workdir, *extra):
    return main([cmd, *extra, "--config", str(config), "--seed", "0", "--workdir", str(workdir)])


def test_staged_pipeline(config, tmp_path, capsys):
    w = tmp_path / "w"
    assert _staged("train-original", config, w) == 0
    assert _staged("train-mi", config, w) == 0
    assert _staged("retrain-gold", config, w) == 0
    assert _staged("unlearn", config, w, "ltu") == 0
    assert _staged("unlearn", config, w, "ga") == 0
    assert _staged("evaluate", config, w) == 0
    m = json.loads((w / "metrics.json").read_text())
    assert set(m["methods"]) == {"ltu", "ga"}
    assert json.loads((w / "ltu.json").read_text())["trajectory"]["iterations"] == 4
    capsys.readouterr()
    assert main(["report", str(w)]) == 0
    assert "ltu" in capsys.readouterr().out


def test_staged_matches_run_all(config, tmp_path):
    w = tmp_path / "w"
    for cmd in ("train-original", "train-mi"):
        _staged(cmd, config, w)
    _staged("unlearn", config, w, "ft")
    cfg = ex.load_config(config)
    ctx = ex.prepare_seed(cfg, 0)
    params, _, _ = ex.run_method(cfg, ctx.spec, ctx.original, ctx.split, ctx.ensemble, 0, "ft")
    assert np.array_equal(np.load(w / "ft.npy"), params)
    assert np.array_equal(np.load(w / "original.npy"), ctx.original)


def test_missing_prerequisite(config, tmp_path, capsys):
    assert _staged("train-mi", config, tmp_path / "w") == 2
    assert "original" in capsys.readouterr().err


def test_run_all_and_report(config, tmp_path, capsys):
    assert main(["run-all", str(config), "--out", str(tmp_path / "out")]) == 0
    run = tmp_path / "out" / ex.load_config(config).config_hash()
    assert (run / "aggregate.csv").exists()
    capsys.readouterr()
    assert main(["report", str(run)]) == 0
    assert capsys.readouterr().out.splitlines()[2].startswith("gold")


def test_run_all_default_out_dir_is_config_relative(config, tmp_path):
    assert main(["run-all", str(config)]) == 0
    assert (tmp_path / "runs" / ex.load_config(config).config_hash() / "table.txt").exists()


def test_gen_data(config, tmp_path):
    out = tmp_path / "d.csv"
    assert main(["gen-data", "--config", str(config), "--out", str(out), "--header"]) == 0
    ds = load_csv(out)
    assert len(ds) == 90 and ds.n_classes == 3


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[model]\nwidth = 3\n")
    assert main(["run-all", str(p)]) == 2
    assert "width" in capsys.readouterr().err


def test_report_empty_dir(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_unknown_method_rejected_by_parser():
    with pytest.raises(SystemExit):
        main(["unlearn", "magic"])


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "ltu.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "run-all" in r.stdout
