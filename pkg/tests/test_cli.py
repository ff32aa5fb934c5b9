import json
import subprocess
import sys

import pytest

from expectile_erp.cli import main
from expectile_erp.pricing import COMPLETION_MARKER

TINY = {"n_train": 64, "n_valid": 64, "n_test": 64, "maturity": 2,
        "train": {"episodes": 20, "N": 32, "validation_every": 10},
        "rl_eval": {"episodes": 20, "N": 32, "noise_sigma": 0.0},
        "dp": {"n_nodes": 41, "n_actions": 21, "K": 7}, "seed": 1}


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(TINY))
    return str(p)


def test_simulate(cfg, tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["--config", cfg, "--out", str(out), "simulate", "--T", "3"]) == 0
    assert {p.name for p in out.iterdir()} == {"train_paths.csv", "valid_paths.csv",
                                               "test_paths.csv", "market.json"}
    lines = (out / "test_paths.csv").read_text().splitlines()
    assert lines[0] == "traj_id,t,asset_0" and len(lines) == 1 + 64 * 4
    assert "64/64/64" in capsys.readouterr().out


def test_simulate_seed_override_changes_paths(cfg, tmp_path):
    main(["--config", cfg, "--out", str(tmp_path / "a"), "simulate"])
    main(["--config", cfg, "--seed", "2", "--out", str(tmp_path / "b"), "simulate"])
    main(["--config", cfg, "--out", str(tmp_path / "c"), "simulate"])
    a, b, c = ((tmp_path / d / "train_paths.csv").read_bytes() for d in "abc")
    assert a == c and a != b


def test_trinomial(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "trinomial"]) == 0
    text = capsys.readouterr().out
    assert "26.3599" in text
    rep = json.loads((tmp_path / "trinomial.json").read_text())
    assert rep["xi0_static"] == pytest.approx(0.9341, abs=1e-3)


def test_train_dp_eval_price_pipeline(cfg, tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["--config", cfg, "--out", out, "train-drm", "--side", "writer"]) == 0
    assert main(["--config", cfg, "--out", out, "train-srm", "--side", "writer"]) == 0
    assert main(["--config", cfg, "--out", out, "dp-solve", "--side", "writer"]) == 0
    assert main(["--config", cfg, "--out", out, "eval", "--actor",
                 f"{out}/actor_acrl_writer.json", "--critic", f"{out}/critic_acrl_writer.json",
                 "--side", "writer"]) == 0
    rows = json.loads((tmp_path / "o" / "eval_writer.json").read_text())
    assert {r["estimator"] for r in rows} == {"RL", "DP", "static"}
    assert {r["maturity"] for r in rows} == {0, 1, 2}
    names = {p.name for p in (tmp_path / "o").iterdir()}
    assert {"curve_acrl_writer.csv", "curve_aorl_writer.csv", "actor_aorl_writer.json",
            "dp_writer.csv"} <= names
    assert "critic_aorl_writer.json" not in names
    capsys.readouterr()
    assert main(["price", "--writer", "0.75", "--buyer", "-0.23"]) == 0
    assert capsys.readouterr().out.strip() == "0.49"


def test_price_errors(capsys):
    assert main(["price", "--writer", "-1", "--buyer", "0.5"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["price"]) == 2


def test_bad_config_exits_nonzero(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"estimators": ["MC"]}))
    assert main(["--config", str(p), "--out", str(tmp_path / "x"), "run"]) == 2
    assert "estimators" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()
    assert main(["--config", str(tmp_path / "missing.json"), "simulate"]) == 2


def test_run_and_price_report(cfg, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["--config", cfg, "--out", str(out), "run"]) == 0
    assert (out / COMPLETION_MARKER).exists()
    capsys.readouterr()
    assert main(["price", "--report", str(out / "price_report.json")]) == 0
    assert capsys.readouterr().out.count("erp=") == 9


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "expectile_erp", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("simulate", "trinomial", "train-drm", "train-srm", "dp-solve", "eval",
                "price", "run"):
        assert cmd in r.stdout
