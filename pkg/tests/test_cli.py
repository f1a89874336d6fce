import json

import numpy as np
import pytest

from holodyn import cli, localmodel
from holodyn.suite import run_suite


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_green_power_map(capsys):
    code, out, _ = run(capsys, "green", "--map", "power2.map", "--point", "2,0,0,0,0,0")
    rec = json.loads(out)
    assert code == 0 and rec["value"] == pytest.approx(np.log(2), abs=1e-15) and rec["residual"] == 0


def test_missing_seed_is_config_error(capsys):
    code, _, err = run(capsys, "lyapunov", "--map", "lattes4susp")
    assert code == 2 and "seed" in err


@pytest.mark.parametrize("argv", [
    ["green", "--map", "nosuchmap.map", "--point", "1,0,0"],
    ["green", "--map", "power2", "--point", "1,2"],
    ["sample-mu", "--map", "power2", "--seed", "1", "--count", "10"],
    ["lyapunov", "--map", "power2", "--seed", "1", "--n", "5"],
    ["verify", "--maps", "cubic"],
    ["frobnicate"],
])
def test_config_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_inline_map(capsys):
    spec = json.dumps({"degree": 2, "components": [[{"exps": [2, 0, 0], "re": 1}], [{"exps": [0, 2, 0], "re": 1}],
                                                    [{"exps": [0, 0, 2], "re": 1}]]})
    code, out, _ = run(capsys, "green", "--map", spec, "--point", "1,0,3,0,0,0")
    assert code == 0 and json.loads(out)["value"] == pytest.approx(np.log(3))


def test_lyapunov_command_is_reproducible(capsys, tmp_path):
    argv = ["lyapunov", "--map", "lattes4susp", "--depth", "12", "--count", "2000", "--n", "20", "--seed", "7"]
    code, out1, _ = run(capsys, *argv, "--out", str(tmp_path / "a"))
    code2, out2, _ = run(capsys, *argv, "--out", str(tmp_path / "b"))
    assert code == code2 == 0
    assert (tmp_path / "a" / "lyapunov.json").read_bytes() == (tmp_path / "b" / "lyapunov.json").read_bytes()
    rec = json.loads(out1)
    assert abs(rec["lambda2"] - np.log(2)) < 0.1 and rec["N"] == 2000
    assert (tmp_path / "a" / "finite_time_exponents.csv").exists()


def test_env_override(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("HOLODYN_SEED", "3")
    monkeypatch.setenv("HOLODYN_OUT", str(tmp_path))
    code, out, _ = run(capsys, "sample-mu", "--map", "power2", "--depth", "10", "--count", "1000")
    assert code == 0 and json.loads(out)["seed"] == 3
    assert (tmp_path / "cloud.csv").exists() and (tmp_path / "cloud.meta.json").exists()


def test_orbit_command(capsys, tmp_path):
    code, out, _ = run(capsys, "orbit", "--map", "lattes4susp", "--n", "20", "--orbits", "3", "--seed", "1",
                       "--out", str(tmp_path))
    assert code == 0 and len(json.loads(out)["rates"]) == 3
    assert (tmp_path / "profiles.csv").exists()


def test_slice_command(capsys):
    code, out, _ = run(capsys, "slice", "--res", "24", "--test-fn", "centered")
    rec = json.loads(out)
    assert code == 0 and rec["map"] == "localmodel"
    assert rec["value"] == pytest.approx(localmodel.pair_T11(localmodel_suite()[0]).rhs, rel=0.05)


def localmodel_suite():
    from holodyn.testfn import standard_suite
    return standard_suite()


def test_localmodel_command(capsys):
    code, out, _ = run(capsys, "localmodel", "--res", "32", "--coupe-res", "128")
    rec = json.loads(out)
    assert code == 0 and not rec["failed"] and len(rec["records"]) == 18 + 30


def test_verify_quick_passes(capsys, tmp_path):
    code, out, err = run(capsys, "verify", "--level", "quick", "--out", str(tmp_path))
    rec = json.loads(out)
    assert code == 0, rec["failed"]
    names = [c["check"] for c in rec["checks"]]
    for m in ("power2", "power4", "lattes4", "lattes4susp"):
        assert f"briend_duval_floor[{m}]" in names
    assert all(c["anchor"] for c in rec["checks"])
    # report over the verify record
    code, out, _ = run(capsys, "report", "--results", str(tmp_path))
    report = json.loads(out)
    assert code == 0 and len(report["checks"]) == len(rec["checks"])
    assert (tmp_path / "pairings.csv").exists()


def test_verify_full_power_map_only(capsys):
    code, out, _ = run(capsys, "verify", "--level", "full", "--maps", "power2")
    rec = json.loads(out)
    assert code == 0
    assert any(c["check"] == "equal_exponents[power2]" and c["verdict"] == "pass" for c in rec["checks"])


def test_full_is_superset_of_quick():
    from holodyn.suite import LEVELS
    q, f = LEVELS["quick"], LEVELS["full"]
    assert f.count >= q.count and f.n >= q.n and f.orbits >= q.orbits and f.res4 >= q.res4
    assert f.n_fns >= q.n_fns and f.coupe_res >= q.coupe_res and f.tol_lattes <= q.tol_lattes


def test_mutation_in_pair_T11_is_caught(capsys, monkeypatch):
    real = localmodel.pair_T11

    def flipped(phi, *a, **k):
        c = real(phi, *a, **k)
        return localmodel.PairingCheck(c.name, c.test_fn, -c.lhs, c.rhs, c.lhs_error, c.rhs_error)

    monkeypatch.setattr(localmodel, "pair_T11", flipped)
    code, out, _ = run(capsys, "verify", "--level", "full", "--checks", "pairings")
    rec = json.loads(out)
    assert code == 1 and any(name.startswith("pair_T11") for name in rec["failed"])


def test_report_errors(capsys, tmp_path):
    assert run(capsys, "report", "--results", str(tmp_path))[0] == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert run(capsys, "report", "--results", str(tmp_path))[0] == 2


def test_report_single_lyapunov_record(capsys, tmp_path):
    rec = {"command": "lyapunov", "map": "power2", "lambda1": 0.69, "lambda2": 0.69, "se1": 0.0, "se2": 0.0,
           "sum_via_det": 1.38, "n": 40, "N": 1000, "seed": 1}
    (tmp_path / "lyapunov.json").write_text(json.dumps(rec))
    code, out, _ = run(capsys, "report", "--results", str(tmp_path))
    assert code == 0 and len(json.loads(out)["summary"]) == 1
    rows = (tmp_path / "exponents_summary.csv").read_text().splitlines()
    assert len(rows) == 2


def test_module_error_exit_code(capsys):
    code, _, err = run(capsys, "sample-mu", "--map", "lattes4susp", "--seed", "1", "--depth", "10", "--count", "1000",
                       "--start", "0,0,1")
    assert code == 1 and "sample-mu" in err
