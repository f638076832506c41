import json
import os

import pytest

from modules import storage
from modules.errors import EXIT_CERTIFICATE, EXIT_INADMISSIBLE, EXIT_OK, EXIT_USAGE
from scripts.chainbound import main


def _config(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _read(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


def test_simulate_writes_reproducible_traces(tmp_path):
    cfg = _config(tmp_path, "sim.env", "MODEL=square\nM_CHAINS=1\nITERATIONS=10\n")
    first, second = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["simulate", "--config", cfg, "--seed", "42", "--out", first]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--seed", "42", "--out", second, "--threads", "3"]) == EXIT_OK
    trace = _read(os.path.join(first, "chain_000.csv"))
    assert len(trace.splitlines()) == 12
    assert trace == _read(os.path.join(second, "chain_000.csv"))
    manifest = storage.load_manifest(os.path.join(first, storage.MANIFEST_NAME))
    assert manifest.command == ["simulate"]
    assert list(manifest.outputs) == ["chain_000.csv"]
    assert os.path.isfile(os.path.join(first, storage.LOG_NAME))


def test_bound_uniform(tmp_path, capsys):
    out = str(tmp_path / "bound")
    assert main(["bound", "uniform", "--out", out]) == EXIT_OK
    report = storage.read_json(os.path.join(out, "bound_uniform.json"))
    assert report["values"]["iterations_for_tolerance"] == 163
    assert '"iterations_for_tolerance": 163' in capsys.readouterr().out


def test_bound_shift_coupling(tmp_path):
    out = str(tmp_path / "sc")
    assert main(["bound", "shift-coupling", "--out", out]) == EXIT_OK
    report = storage.read_json(os.path.join(out, "bound_shift_coupling.json"))
    assert 3.95e7 <= report["values"]["coefficient"] <= 4.05e7


def test_bound_shift_coupling_inadmissible_r(tmp_path):
    cfg = _config(tmp_path, "bad_r.env", "BOUND_R=0.9\n")
    assert main(["bound", "shift-coupling", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_INADMISSIBLE


@pytest.mark.parametrize("target", ["proof-constants", "minorization"])
def test_verify_targets_pass(tmp_path, target):
    out = str(tmp_path / target)
    assert main(["verify", target, "--out", out]) == EXIT_OK
    assert os.path.isfile(os.path.join(out, f"verify_{target.replace('-', '_')}.json"))


def test_diagnose_outputs(tmp_path):
    cfg = _config(tmp_path, "d.env", "MODEL=square\nM_CHAINS=3\nITERATIONS=20\nBURN_IN=10\n"
                                     "INIT_POLICY=uniform\nINIT_LOW=0.0\nINIT_HIGH=1.0\n")
    out = str(tmp_path / "diag")
    assert main(["diagnose", "--config", cfg, "--out", out]) == EXIT_OK
    payload = storage.read_json(os.path.join(out, "diagnose.json"))
    assert sorted(payload) == ["phi1", "phi2", "psi"]
    assert _read(os.path.join(out, "diagnose.csv")).startswith("functional,B,W,sigma2_hat,V_hat,R")


def test_diagnose_single_chain_is_usage_error(tmp_path):
    cfg = _config(tmp_path, "one.env", "M_CHAINS=1\nITERATIONS=10\n")
    assert main(["diagnose", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_tv_curve_planar(tmp_path):
    cfg = _config(tmp_path, "tv.env", "MODEL=planar\nM_CHAINS=20\nITERATIONS=10\nINIT_POINT=1.0,0.0\n"
                                      "FUNCTIONALS=f\nCHECKPOINTS=0,5,10\n")
    out = str(tmp_path / "tv")
    assert main(["tv-curve", "--config", cfg, "--out", out]) == EXIT_OK
    curve = storage.read_curve_csv(os.path.join(out, "tv_curve_f.csv"))
    assert curve["checkpoint"] == [0, 5, 10]
    assert curve["stderr"][0] == 0.0
    assert all(0.0 <= e <= 1.0 for e in curve["estimate"])


def test_tv_curve_rejects_unbounded_functional(tmp_path):
    cfg = _config(tmp_path, "psi.env", "MODEL=planar\nM_CHAINS=2\nITERATIONS=5\nFUNCTIONALS=psi\n")
    assert main(["tv-curve", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_missing_config_is_usage_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.env"), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_argparse_rejects_unknown_kind():
    with pytest.raises(SystemExit) as info:
        main(["bound", "exact"])
    assert info.value.code == 2


def test_replay_matches_and_detects_tampering(tmp_path):
    cfg = _config(tmp_path, "sim.env", "MODEL=planar\nM_CHAINS=3\nITERATIONS=8\n")
    out = str(tmp_path / "run")
    assert main(["simulate", "--config", cfg, "--seed", "5", "--out", out]) == EXIT_OK
    manifest_path = os.path.join(out, storage.MANIFEST_NAME)
    assert main(["replay", manifest_path]) == EXIT_OK

    data = json.loads(_read(manifest_path))
    data["outputs"]["chain_001.csv"] = "0" * 64
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(data))
    assert main(["replay", str(tampered)]) == EXIT_CERTIFICATE


def test_verify_drift_on_small_grid(tmp_path):
    cfg = _config(tmp_path, "drift.env", "VERIFY_POINTS=40\n")
    out = str(tmp_path / "drift")
    assert main(["verify", "drift", "--config", cfg, "--out", out, "--threads", "2"]) == EXIT_OK
    report = storage.read_json(os.path.join(out, "verify_drift.json"))
    assert "drift" in report


@pytest.mark.parametrize("text", ['{"command": ["bound"]}', "not json", '{"command": [], "config": {}, '
                                  '"rng_algorithm": "PCG64", "version": "1"}'])
def test_replay_of_malformed_manifest_is_usage_error(tmp_path, text):
    path = tmp_path / "manifest.json"
    path.write_text(text)
    assert main(["replay", str(path)]) == EXIT_USAGE


def test_tv_curve_streams_all_functionals_in_one_pass(tmp_path):
    text = "MODEL=square\nM_CHAINS=30\nITERATIONS=6\nCHECKPOINTS=2,6\nTV_REFERENCE_CHAINS=40\nTV_REFERENCE_ITERATIONS=5\n"
    both = _config(tmp_path, "both.env", text + "FUNCTIONALS=g,ell\n")
    single = _config(tmp_path, "single.env", text + "FUNCTIONALS=ell\n")
    assert main(["tv-curve", "--config", both, "--out", str(tmp_path / "both")]) == EXIT_OK
    assert main(["tv-curve", "--config", single, "--out", str(tmp_path / "single")]) == EXIT_OK
    assert os.path.isfile(tmp_path / "both" / "tv_curve_g.csv")
    joint = storage.read_curve_csv(str(tmp_path / "both" / "tv_curve_ell.csv"))
    alone = storage.read_curve_csv(str(tmp_path / "single" / "tv_curve_ell.csv"))
    assert joint["checkpoint"] == alone["checkpoint"] == [2, 6]
    assert joint["estimate"] == pytest.approx(alone["estimate"], rel=1e-12, abs=1e-15)
    assert joint["stderr"] == pytest.approx(alone["stderr"], rel=1e-12, abs=1e-15)
    assert joint["reference"] == pytest.approx(alone["reference"], rel=1e-12)
