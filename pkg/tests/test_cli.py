"""Command-line pipeline: verify ledger, solve outputs, analyze, report.

Runs everything in-process through main(argv) on a small 17x17 config so
reruns can be compared byte for byte.
"""

import json
import os

import pytest

from gaugeflow.cli import _eps_label, main
from gaugeflow.config import ExperimentConfig

SMALL = {
    "grid": {"nx": 17, "ny": 17},
    "time": {"dt": 0.01, "horizon": 0.03},
    "analysis": {"cylinders": [
        {"x0": 0.5, "y0": 0.5, "t0": 0.03, "rho": 0.15}]},
}


@pytest.fixture(scope="module")
def small_cfg_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def tree_bytes(root):
    out = {}
    for dirpath, _dirnames, filenames in os.walk(root):
        for name in filenames:
            full = os.path.join(dirpath, name)
            rel = os.path.relpath(full, root)
            with open(full, "rb") as fh:
                out[rel] = fh.read()
    return out


def test_eps_label_convention():
    assert _eps_label(1.0) == "eps_1"
    assert _eps_label(0.3) == "eps_0p3"
    assert _eps_label(0.03) == "eps_0p03"
    assert _eps_label(1e-06) == "eps_1em06"


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "gaugeflow" in capsys.readouterr().out


def test_missing_subcommand_exits_with_usage():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1,}')
    rc = main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_analyze_without_checkpoints_exit_code(small_cfg_path, tmp_path,
                                               capsys):
    rc = main(["analyze", "--config", small_cfg_path,
               "--out", str(tmp_path / "empty")])
    assert rc == 2
    assert "missing checkpoint" in capsys.readouterr().err


def test_verify_writes_ledger(tmp_path, capsys):
    out = tmp_path / "v"
    rc = main(["verify", "--out", str(out)])
    text = capsys.readouterr().out
    assert rc == 0
    ledger = (out / "verify_ledger.txt").read_text().splitlines()
    assert len(ledger) >= 60
    assert all(line.startswith(("PASS ", "FAIL ")) for line in ledger)
    assert all(": " in line for line in ledger)
    assert not any(line.startswith("FAIL") for line in ledger)
    # the console copy ends with the tally line
    assert "checks passed" in text.strip().splitlines()[-1]


def test_solve_pipeline_and_determinism(small_cfg_path, tmp_path, capsys):
    out1 = str(tmp_path / "run1")
    out2 = str(tmp_path / "run2")
    assert main(["solve", "--config", small_cfg_path, "--out", out1]) == 0
    assert main(["solve", "--config", small_cfg_path, "--out", out2]) == 0
    capsys.readouterr()

    doc = json.loads(open(os.path.join(out1, "summary.json")).read())
    cfg = ExperimentConfig.load(small_cfg_path)
    assert doc["config_hash"] == cfg.config_hash()
    assert doc["constants"]["gradient_bound_bootstrapped"] is True
    assert set(doc["energy_tables"]) == {"eps_1", "eps_0p3", "eps_0p1"}
    for label in ("eps_1", "eps_0p3", "eps_0p1"):
        sub = os.path.join(out1, label)
        assert os.path.exists(os.path.join(sub, "field.npz"))
        assert os.path.exists(os.path.join(sub, "energy.csv"))
        assert os.path.exists(os.path.join(sub, "final_state.csv"))
        with open(os.path.join(sub, "energy.csv")) as fh:
            assert fh.readline() == f"# config_hash={cfg.config_hash()}\n"
    assert "epsconv_monotone" in doc["verdicts"]

    t1, t2 = tree_bytes(out1), tree_bytes(out2)
    assert set(t1) == set(t2)
    mismatched = [rel for rel in t1 if t1[rel] != t2[rel]]
    assert mismatched == []


def test_analyze_reproduces_analysis(small_cfg_path, tmp_path, capsys):
    out = str(tmp_path / "run")
    assert main(["solve", "--config", small_cfg_path, "--out", out]) == 0
    before = tree_bytes(out)
    assert main(["analyze", "--config", small_cfg_path, "--out", out]) == 0
    capsys.readouterr()
    doc = json.loads(open(os.path.join(out, "analysis_summary.json")).read())
    solve_doc = json.loads(open(os.path.join(out, "summary.json")).read())
    assert doc["config_hash"] == solve_doc["config_hash"]
    assert doc["verdicts"] == solve_doc["verdicts"]
    assert doc["excess"] == solve_doc["excess"]
    after = tree_bytes(out)
    # analysis csvs are rewritten with identical bytes
    for rel in before:
        if rel.endswith(".csv") and rel in after:
            assert after[rel] == before[rel]


def test_seed_override_changes_hash(small_cfg_path, tmp_path, capsys):
    out = str(tmp_path / "seeded")
    assert main(["solve", "--config", small_cfg_path, "--out", out,
                 "--seed", "7"]) == 0
    capsys.readouterr()
    doc = json.loads(open(os.path.join(out, "summary.json")).read())
    base = ExperimentConfig.load(small_cfg_path)
    assert doc["config_hash"] != base.config_hash()
    assert doc["metadata"]["seed"] == 7


def test_report_merges_summaries(small_cfg_path, tmp_path, capsys):
    out1 = str(tmp_path / "a")
    out2 = str(tmp_path / "b")
    assert main(["solve", "--config", small_cfg_path, "--out", out1]) == 0
    assert main(["solve", "--config", small_cfg_path, "--out", out2,
                 "--seed", "9"]) == 0
    merged_path = str(tmp_path / "merged.json")
    assert main(["report", os.path.join(out1, "summary.json"),
                 os.path.join(out2, "summary.json"),
                 "--out", merged_path]) == 0
    capsys.readouterr()
    merged = json.loads(open(merged_path).read())
    assert len(merged["reports"]) == 2
    assert len(set(merged["config_hashes"])) == 2
    assert isinstance(merged["all_verdicts_true"], bool)
