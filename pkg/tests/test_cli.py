import json
import subprocess
import sys

import numpy as np
import pytest

from mccir.cli import main


def write_lines(path, values):
    path.write_text("\n".join(str(v) for v in values) + "\n")
    return str(path)


@pytest.fixture
def toy_files(tmp_path):
    seq = write_lines(tmp_path / "seq.txt", [1, 0])
    return tmp_path, seq


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_cir_defaults(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"memory": 3, "target_tap2": 11.76}))
    code, out, _ = run(["cir", str(cfg)], capsys)
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["cir"], [60.22, 11.76, 5.13, 12.04], rtol=0.01)


def test_cir_l1(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"memory": 1}))
    code, out, _ = run(["cir", str(cfg)], capsys)
    assert code == 0 and len(json.loads(out)["cir"]) == 2


def test_cir_missing_file(tmp_path, capsys):
    code, _, err = run(["cir", str(tmp_path / "nope.json")], capsys)
    assert code == 2 and "cannot read" in err


def test_cir_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"distance": -1}))
    code, _, err = run(["cir", str(cfg)], capsys)
    assert code == 2 and err


@pytest.mark.parametrize("method,obs,expected", [
    ("lsse", [5, 2], [3, 2]),
    ("ml", [0, 5], [0, 2.5]),
    ("ml", [5, 2], [3, 2]),
    ("lsse-sub", [0, 5], [0, 5]),
])
def test_estimate_toy(toy_files, capsys, method, obs, expected):
    tmp, seq = toy_files
    o = write_lines(tmp / "obs.txt", obs)
    code, out, _ = run(["estimate", "--method", method, "--seq", seq, "--obs", o, "--L", "1"], capsys)
    assert code == 0
    res = json.loads(out)
    np.testing.assert_allclose(res["cir"], expected, atol=1e-6)
    assert set(res) >= {"cir", "active_subset", "objective", "iterations"}


def test_estimate_lmmse_with_prior(toy_files, capsys):
    tmp, seq = toy_files
    o = write_lines(tmp / "obs.txt", [5, 2])
    prior = tmp / "prior.json"
    prior.write_text(json.dumps({"default_cir": [3, 2], "sigma2": 0.0}))
    code, out, _ = run(["estimate", "--method", "lmmse", "--seq", seq, "--obs", o, "--L", "1", "--prior", str(prior)], capsys)
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["cir"], [2.625, 1.75])


@pytest.mark.parametrize("method", ["map", "lmmse"])
def test_estimate_requires_prior(toy_files, capsys, method):
    tmp, seq = toy_files
    o = write_lines(tmp / "obs.txt", [5, 2])
    code, _, err = run(["estimate", "--method", method, "--seq", seq, "--obs", o, "--L", "1"], capsys)
    assert code == 2 and "--prior" in err


def test_estimate_length_mismatch(toy_files, capsys):
    tmp, seq = toy_files
    o = write_lines(tmp / "obs.txt", [5, 2, 1])
    code, _, err = run(["estimate", "--method", "ml", "--seq", seq, "--obs", o, "--L", "1"], capsys)
    assert code == 2 and "K - L + 1" in err


def test_estimate_isif_needs_isi_free(tmp_path, capsys):
    seq = write_lines(tmp_path / "seq.txt", [1, 1, 0, 1])
    o = write_lines(tmp_path / "obs.txt", [1, 2, 3, 4])
    code, _, err = run(["estimate", "--method", "isif", "--seq", seq, "--obs", o, "--L", "1"], capsys)
    assert code == 2 and "ISI-free" in err


def test_estimate_isif(tmp_path, capsys):
    seq = write_lines(tmp_path / "seq.txt", [1, 0, 1, 0])
    o = write_lines(tmp_path / "obs.txt", [10, 2, 8, 4])
    code, out, _ = run(["estimate", "--method", "isif", "--seq", seq, "--obs", o, "--L", "1"], capsys)
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["cir"], [6, 3])


def test_bad_number_in_file(tmp_path, capsys):
    seq = write_lines(tmp_path / "seq.txt", [1, "x"])
    o = write_lines(tmp_path / "obs.txt", [5, 2])
    code, _, err = run(["estimate", "--method", "ml", "--seq", seq, "--obs", o, "--L", "1"], capsys)
    assert code == 2 and "not a number" in err


def test_numeric_failure_exit_code(tmp_path, capsys):
    # an all-ones sequence leaves the taps unidentifiable
    seq = write_lines(tmp_path / "seq.txt", [1] * 6)
    o = write_lines(tmp_path / "obs.txt", [3] * 6)
    code, _, err = run(["estimate", "--method", "lsse-sub", "--seq", seq, "--obs", o, "--L", "1"], capsys)
    assert code == 1 and "numeric" in err


def test_unknown_method(toy_files, capsys):
    _, seq = toy_files
    code, _, _ = run(["estimate", "--method", "foo", "--seq", seq, "--obs", seq, "--L", "1"], capsys)
    assert code == 2


def test_seqsearch(capsys):
    code, out, _ = run(["seqsearch", "--criterion", "lsse", "--K", "10", "--L", "5"], capsys)
    assert code == 0
    res = json.loads(out)
    assert len(res["sequence"]) == 10 and res["value"] > 0


def test_bounds_command(tmp_path, capsys):
    seq = write_lines(tmp_path / "seq.txt", [1, 1, 0, 0, 1, 0, 0, 1, 0, 1] * 2)
    prior = tmp_path / "prior.json"
    prior.write_text(json.dumps({"sigma2": 0.1}))
    code, out, _ = run(["bounds", "--seq", seq, "--L", "3", "--prior", str(prior), "--samples", "200"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["expected_ccrb"] > res["bcrb"] > 0


def test_experiment_unknown_preset(tmp_path, capsys):
    code, _, err = run(["experiment", "--preset", "fig9", "--out", str(tmp_path)], capsys)
    assert code == 2 and "unknown preset" in err


def test_experiment_byte_identical(tmp_path, capsys, monkeypatch):
    # shrink the sweep so the check is quick; the CLI path is unchanged
    from mccir import cli, experiments

    def tiny(name, trials, seed):
        cfg = experiments.preset(name, trials, seed)
        cfg.lengths = (10, 20)
        cfg.bound_samples = 200
        return cfg

    monkeypatch.setattr(cli, "preset", tiny)
    for d in ("a", "b"):
        assert run(["experiment", "--preset", "var_k", "--trials", "10", "--seed", "1", "--out", str(tmp_path / d)], capsys)[0] == 0
    a = (tmp_path / "a" / "var_k.csv").read_bytes()
    assert a == (tmp_path / "b" / "var_k.csv").read_bytes()
    assert (tmp_path / "a" / "var_k.json").exists()


def test_experiment_table1(tmp_path, capsys, monkeypatch):
    from mccir import cli, experiments

    def k10(name, trials, seed):
        cfg = experiments.preset(name, trials, seed)
        cfg.lengths = (10,)
        return cfg

    monkeypatch.setattr(cli, "preset", k10)
    assert run(["experiment", "--preset", "table1", "--out", str(tmp_path)], capsys)[0] == 0
    lines = (tmp_path / "table1.csv").read_text().splitlines()
    assert lines[0] == "memory,K,sigma2,criterion,sequence,value,isi_free"
    assert len(lines) == 1 + 3 * 2


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{}")
    proc = subprocess.run([sys.executable, "-m", "mccir", "cir", str(cfg), "--L", "2"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(json.loads(proc.stdout)["cir"]) == 3
    proc = subprocess.run([sys.executable, "-m", "mccir"], capture_output=True, text=True)
    assert proc.returncode == 2
