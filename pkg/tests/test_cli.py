import json
import subprocess
import sys

import pytest

from fhlab import gallery
from fhlab.cli import EXIT_ERROR, EXIT_FAIL, EXIT_OK, main


@pytest.fixture(scope="module")
def sets(tmp_path_factory):
    d = tmp_path_factory.mktemp("sets")
    gallery.export(d)
    return d


def _run(out, *argv):
    code = main([*argv, "--out", str(out)])
    cmd = argv[0] if argv[0] != "hardy" else f"hardy_{argv[1]}"
    path = out / f"{cmd.replace('-', '_')}.json"
    return code, (json.loads(path.read_text()) if path.exists() else None)


def test_dim_cantor(tmp_path, sets, capsys):
    code, doc = _run(tmp_path, "dim", "--set", str(sets / "cantor.json"), "--kind", "assouad-upper")
    assert code == EXIT_OK
    assert doc["result"]["value"] == pytest.approx(0.63, abs=0.07)
    assert doc["schema_version"] == 1
    assert "dim.csv" in doc["files"] and "dim.png" in doc["files"]
    assert (tmp_path / "dim.png").stat().st_size > 0
    assert json.loads(capsys.readouterr().out)["command"] == "dim"


def test_hardy_eval_tent(tmp_path, sets):
    code, doc = _run(tmp_path, "hardy", "eval", "--set", str(sets / "origin3.json"), "--n", "3", "--p", "2",
                     "--q", "2", "--beta", "0", "--family", "bump:0,1")
    assert code == EXIT_OK
    assert doc["result"]["ratio"] == pytest.approx(1.0, rel=0.03)


def test_verdict_sphere_no_holds_rule(tmp_path, sets):
    code, doc = _run(tmp_path, "verdict", "--set", str(sets / "sphere.json"), "--n", "3", "--p", "2", "--q", "2",
                     "--beta", "2", "--use-metadata", "--no-figures")
    assert code == EXIT_OK
    assert not doc["result"]["verdict"]["prediction"].startswith("Holds")


def test_counterexample_growth(tmp_path):
    code, doc = _run(tmp_path, "hardy", "counterexample", "--family", "sphere-fj")
    assert code == EXIT_OK
    k = doc["result"]["trace"]["kappa"]
    assert all(b > a for a, b in zip(k, k[1:]))


def test_same_argv_same_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["whitney", "--set", "origin2", "--depth", "5", "--no-meta", "--no-figures"]
    assert main([*argv, "--out", str(a)]) == EXIT_OK
    assert main([*argv, "--out", str(b), "--threads", "3"]) == EXIT_OK
    assert (a / "whitney.json").read_bytes() == (b / "whitney.json").read_bytes()


def test_strict_fail_exit(tmp_path):
    code, doc = _run(tmp_path, "aikawa", "--set", "hyperplane2", "--s", "0.5", "--strict", "--no-figures")
    assert code == EXIT_FAIL and doc["result"]["verdict"] == "Fail"
    code, _ = _run(tmp_path, "aikawa", "--set", "hyperplane2", "--s", "0.5", "--no-figures")
    assert code == EXIT_OK


def test_errors_exit_one(tmp_path):
    assert main(["dim", "--set", "nowhere.json", "--out", str(tmp_path)]) == EXIT_ERROR
    assert main(["frobnicate"]) == EXIT_ERROR
    assert main(["hardy", "eval", "--set", "origin3", "--n", "2", "--p", "2", "--q", "2",
                 "--family", "bump:0,1", "--out", str(tmp_path)]) == EXIT_ERROR


def test_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("FHL_NO_META", "1")
    monkeypatch.setenv("FHL_OUT", str(tmp_path))
    assert main(["porosity", "--set", "segment", "--no-figures"]) == EXIT_OK
    doc = json.loads((tmp_path / "porosity.json").read_text())
    assert "meta" not in doc


def test_gallery_export(tmp_path):
    assert main(["gallery", "--export", str(tmp_path / "g"), "--out", str(tmp_path)]) == EXIT_OK
    assert sorted(p.stem for p in (tmp_path / "g").glob("*.json")) == sorted(gallery.names())


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fhlab.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
