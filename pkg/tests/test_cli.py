import json
import subprocess
import sys

import pytest

from beliefmppi.cli import main
from beliefmppi.harness.io import EPISODES, METRICS, TIMING, TRACES, read_metrics


def test_run_writes_all_outputs(tmp_path, capsys):
    code = main(["run", "--trials", "2", "--seed", "3", "--out", str(tmp_path)])
    assert code == 0
    for name in (EPISODES, METRICS, TRACES, TIMING):
        assert (tmp_path / name).exists()
    assert "success" in capsys.readouterr().out


def test_sweep_over_levels(tmp_path):
    code = main(["run", "--trials", "1", "--beta-s", "0.5,0.9", "--out", str(tmp_path)])
    assert code == 0
    labels = [r["label"] for r in read_metrics(tmp_path / METRICS)]
    assert labels == ["cvar_bs0.5_bc0.5_lr0.5", "cvar_bs0.9_bc0.9_lr0.5"]


def test_yaml_config(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("experiment: {trials: 1, T: 4, variant: cc}\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert read_metrics(out / METRICS)[0]["label"].startswith("cc_")


def test_table_rebuilds_metrics(tmp_path, capsys):
    main(["run", "--trials", "2", "--out", str(tmp_path / "a")])
    capsys.readouterr()
    assert main(["table", str(tmp_path / "a"), "--out", str(tmp_path / "b")]) == 0
    a = read_metrics(tmp_path / "a" / METRICS)
    b = read_metrics(tmp_path / "b" / METRICS)
    assert a == b


def test_verify_thm2_json(tmp_path):
    assert main(["verify", "thm2", "--trials", "10", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "thm2.json").read_text())
    assert report["reports"][0]["status"] == "pass"


def test_verify_vacuous_exit_code():
    # 10 solves at 0.9 leave no probability to guarantee
    assert main(["verify", "thm3", "--beta-s", "0.9", "--horizon-steps", "10", "--trials", "1"]) == 3


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_log_exit_code(tmp_path):
    assert main(["table", str(tmp_path)]) == 2


def test_bad_flag_value():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--beta-s", "high"])
    assert exc.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "beliefmppi", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    assert "verify" in proc.stdout
