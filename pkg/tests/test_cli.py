import json
import math
import subprocess
import sys

import pytest

from rggstein.cli import EXIT_INVALID, EXIT_OK, main, parse_config


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_stein_factors(capsys):
    assert main(["bound", "stein-factors", "--lambda", "1"]) == EXIT_OK
    out = capsys.readouterr().out.split()
    assert out == ["c_V=1.5", "c_E=0.25"]


def test_bstar_infinite(capsys):
    assert main(["bound", "bstar", "--epsilon", "0.5", "--c", "1", "--n-star", "inf"]) == EXIT_OK
    val = float(capsys.readouterr().out.strip().split("=")[1])
    assert val == pytest.approx(3 * math.log(2), rel=1e-12)


def test_bstar_bad_n_star(capsys):
    assert main(["bound", "bstar", "--epsilon", "0.5", "--c", "1", "--n-star", "x"]) == EXIT_INVALID


def test_glauber_bound(capsys):
    assert main(["bound", "glauber", "--n", "4", "--m", "4"]) == EXIT_OK
    assert float(capsys.readouterr().out.split("=")[1]) == pytest.approx(25 / 3)
    assert main(["bound", "glauber", "--n", "3", "--m", "4"]) == EXIT_INVALID


def test_sample_then_gospa_and_wasserstein(tmp_path, capsys):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    assert main(["sample", "--n", "6", "--seed", "1", "-o", a]) == EXIT_OK
    assert main(["sample", "--n", "5", "--seed", "2", "-o", b]) == EXIT_OK
    doc = json.loads(open(a).read())
    assert doc["seed"] == 1 and len(doc["graphs"]) == 6 and len(doc["config_sha256"]) == 64
    ga, gb = str(tmp_path / "ga.json"), str(tmp_path / "gb.json")
    with open(ga, "w") as f:
        json.dump(doc["graphs"][0], f)
    with open(gb, "w") as f:
        json.dump(doc["graphs"][1], f)
    capsys.readouterr()
    assert main(["gospa", ga, gb]) == EXIT_OK
    assert 0.0 <= float(capsys.readouterr().out.split()[0]) <= 1.5
    assert main(["wasserstein", a, b]) == EXIT_OK
    assert 0.0 <= float(capsys.readouterr().out.split()[0]) <= 1.5


def test_gbdp_csv_reproducible(tmp_path):
    outs = []
    for k in range(2):
        path = str(tmp_path / f"t{k}.csv")
        assert main(["gbdp", "--seed", "3", "--horizon", "2", "-o", path]) == EXIT_OK
        outs.append(open(path).read())
    assert outs[0] == outs[1]
    lines = outs[0].splitlines()
    assert lines[0].startswith("# config_sha256=") and lines[1].startswith("time,graph_id")


def test_couple(tmp_path, capsys):
    cfg = _write(tmp_path, "c.toml", "[vertex]\nkind = \"hard-core\"\nbeta = 10.0\nr = 0.05\n")
    assert main(["couple", "--config", cfg, "--seed", "1", "--horizon", "20"]) == EXIT_OK
    cap = capsys.readouterr()
    assert "coupling_time=" in cap.err and "coupled_flag" in cap.out


def test_pip_and_boolean_bounds(tmp_path, capsys):
    cfg = _write(tmp_path, "p.toml", "[vertex]\nkind = \"hard-core\"\nbeta = 3.0\nr = 0.1\n")
    assert main(["bound", "pip", "--config", cfg]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["epsilon"] == pytest.approx(3 * math.pi * 0.01)
    assert main(["bound", "boolean"]) == EXIT_OK
    assert len(json.loads(capsys.readouterr().out)["reports"]) == 4


def test_experiment_glauber_byte_identical(tmp_path):
    cfg = _write(tmp_path, "g.toml", "seed = 4\n[glauber]\nn = [4]\nreps = 2000\n")
    outs = []
    for w in (1, 2):
        path = str(tmp_path / f"g{w}.csv")
        assert main(["experiment", "glauber", "--config", cfg, "--workers", str(w),
                     "-o", path]) == EXIT_OK
        outs.append(open(path, "rb").read())
    assert outs[0] == outs[1]
    assert outs[0].decode().splitlines()[1] == "n,m,mean_tau,se,expected,rel_error"


class TestConfigErrors:
    def test_bad_probability(self, tmp_path, capsys):
        cfg = _write(tmp_path, "bad.toml", "[edge]\np = 1.5\n")
        assert main(["sample", "--config", cfg]) == EXIT_INVALID
        assert "invalid connection probability" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = _write(tmp_path, "bad.toml", "[vertex]\nbetta = 1.0\n")
        assert main(["sample", "--config", cfg]) == EXIT_INVALID
        assert "betta" in capsys.readouterr().err

    def test_duplicate_key(self, tmp_path, capsys):
        cfg = _write(tmp_path, "bad.toml", "[vertex]\nbeta = 1.0\nbeta = 2.0\n")
        assert main(["sample", "--config", cfg]) == EXIT_INVALID

    def test_wrong_type(self, tmp_path):
        cfg = _write(tmp_path, "bad.toml", "[sample]\nn = \"many\"\n")
        assert main(["sample", "--config", cfg]) == EXIT_INVALID

    def test_bad_choice(self, tmp_path):
        cfg = _write(tmp_path, "bad.toml", "[vertex]\nkind = \"cluster\"\n")
        assert main(["sample", "--config", cfg]) == EXIT_INVALID

    def test_missing_file(self):
        assert main(["sample", "--config", "/nonexistent/x.toml"]) == EXIT_INVALID

    def test_argparse_error(self):
        assert main(["frobnicate"]) == EXIT_INVALID


def test_hash_ignores_output_and_workers():
    a = parse_config(None, {"output": "x.csv", "workers": 4})
    b = parse_config(None, {})
    assert a.hash == b.hash
    assert parse_config(None, {"seed": 1}).hash != b.hash


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "rggstein.cli", "bound", "glauber", "--n", "10",
                          "--m", "3"], capture_output=True, text=True)
    assert res.returncode == 0
    assert float(res.stdout.split("=")[1]) == pytest.approx(55 / 3)
