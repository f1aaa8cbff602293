import os
import subprocess
import sys

import pytest

from peacocklab import io
from peacocklab.cli import ConfigError, build_parser, read_config, report, resolve, run


def _summary(d):
    return {r["name"]: r for r in io.read_summary(d)}


def test_verify_w2_diagonal_prints_one(tmp_path, capsys):
    code = run(["verify-w2", "--case", "diagonal", "--a", "1", "--b", "4", "--dim", "1", "--out", str(tmp_path)])
    assert code == 0
    assert capsys.readouterr().out.splitlines()[0] == "1.0"
    assert _summary(tmp_path)["closed_form_error"]["pass"] == "true"
    meta = io.read_meta(tmp_path / "config.meta")
    assert meta["a"] == "1.0" and "out" not in meta and "workers" not in meta


def test_verify_w2_metric(tmp_path):
    assert run(["verify-w2", "--case", "metric", "--dim", "3", "--n-triples", "50", "--out", str(tmp_path)]) == 0


def test_figure1(tmp_path):
    assert run(["figure1", "--seed", "7", "--dt", "1e-3", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("figure1_*.svg"))) == 3
    assert len(list(tmp_path.glob("figure1_*.csv"))) == 3


def test_failing_check_exits_one(tmp_path):
    code = run(["simulate-lambda", "--n-paths", "200", "--dt", "0.01", "--mean-tol", "1e-9", "--out", str(tmp_path)])
    assert code == 1
    assert _summary(tmp_path)["mean_r2_end"]["pass"] == "false"


def test_simulate_lambda_outputs(tmp_path):
    code = run(["simulate-lambda", "--n-paths", "500", "--dt", "0.01", "--export-paths", "3", "--out", str(tmp_path)])
    assert code == 0
    rows = io.read_table(tmp_path / "paths.csv")
    assert {r["path_id"] for r in rows} == {"0", "1", "2"}
    assert (tmp_path / "marginal_end.csv").is_file()


def test_usage_errors_exit_two(tmp_path, capsys):
    assert run([]) == 2
    assert run(["no-such-command"]) == 2
    assert run(["verify-w2", "--dim", "zero"]) == 2
    assert run(["simulate-lambda", "--dt", "2.0", "--out", str(tmp_path)]) == 2
    assert run(["simulate-lambda", "--lambda", "0.5", "--r0", "0", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "dt" in err and "r0=0" in err


def test_config_file_and_flag_priority(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("# comment\nseed = 3\nn_paths = 100\n\n[verify-w2]\nseed = 5\n")
    args = build_parser().parse_args(["verify-w2", "--config", str(cfg)])
    v = resolve("verify-w2", args)
    assert v["seed"] == 5 and v["n_paths"] == 100
    args = build_parser().parse_args(["verify-w2", "--config", str(cfg), "--seed", "9"])
    assert resolve("verify-w2", args)["seed"] == 9


def test_config_errors_name_the_line(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("seed = 1\nthis line is broken\n")
    assert run(["verify-w2", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert f"{cfg}:2" in capsys.readouterr().err
    cfg.write_text("seed = 1\nbogus = 4\n")
    assert run(["verify-w2", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:2" in err and "bogus" in err
    cfg.write_text("dt = -1\n")
    assert run(["verify-w2", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "dt" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        read_config_path = tmp_path / "sec.ini"
        read_config_path.write_text("[nonsense]\nseed = 1\n")
        read_config(read_config_path, "verify-w2")
    assert run(["verify-w2", "--config", str(tmp_path / "missing.ini")]) == 2


def test_default_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PEACOCKLAB_OUT", str(tmp_path))
    assert run(["verify-w2"]) == 0
    assert (tmp_path / "verify-w2" / "summary.csv").is_file()


def test_report(tmp_path, capsys):
    good, bad = tmp_path / "good", tmp_path / "bad"
    assert run(["verify-w2", "--out", str(good)]) == 0
    assert run(["simulate-lambda", "--n-paths", "100", "--dt", "0.01", "--mean-tol", "1e-9", "--out", str(bad)]) == 1
    assert run(["report", str(good)]) == 0
    assert run(["report", str(good), str(bad), "--out", str(tmp_path / "rep")]) == 1
    assert _summary(tmp_path / "rep")["overall"]["pass"] == "false"
    assert run(["report"]) == 2
    assert run(["report", str(tmp_path / "empty")]) == 2
    rows, passed = report([good])
    assert passed and rows
    capsys.readouterr()


def test_counterexample_exact(tmp_path):
    code = run(["counterexample", "--n-paths", "5000", "--event-samples", "20000", "--out", str(tmp_path)])
    assert code == 0
    row = io.read_table(tmp_path / "falsification.csv")[0]
    assert row["E_f_branch2"] == "0.5" and row["E_f_branch1"] == "0.0"


def test_jump_mimicker_cli(tmp_path):
    assert run(["jump-mimicker", "--n-paths", "5000", "--dt", "0.1", "--out", str(tmp_path)]) == 0
    assert _summary(tmp_path)["radius_deviation"]["value"] == "0.0"


def test_regularize_cli(tmp_path):
    assert run(["regularize", "--source", "brownian", "--n-paths", "2000", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "curve" / "times.csv").is_file()


def test_module_entry_point(tmp_path):
    env = dict(os.environ, PEACOCKLAB_OUT=str(tmp_path))
    proc = subprocess.run([sys.executable, "-m", "peacocklab", "verify-w2"], capture_output=True, text=True,
                          env=env)
    assert proc.returncode == 0 and proc.stdout.splitlines()[0] == "1.0"
