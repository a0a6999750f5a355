import csv
import json
import shutil
import subprocess

import pytest

from mechlearn.cli import EXIT_CONFIG, EXIT_OK, load_config, main
from mechlearn.exceptions import ConfigError


def _write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    assert main(["solve", "--out", str(out), "--seed", "5"]) == EXIT_OK
    return out


def test_solve_outputs(solved):
    for name in ("envelope.csv", "lp_solution.csv", "lp_stats.json", "mechanism.json",
                 "certificate.json", "feasibility.json", "summary.json"):
        assert (solved / name).is_file()
    summary = json.loads((solved / "summary.json").read_text())
    assert summary["s_min"] == pytest.approx(0.375, abs=0.005)
    assert summary["s_max"] == pytest.approx(0.75, abs=0.005)
    assert summary["optimal_value"] > summary["efficient_value"]
    assert json.loads((solved / "certificate.json").read_text())["passed"]
    assert json.loads((solved / "feasibility.json").read_text())["passed"]
    rows = _rows(solved / "lp_solution.csv")
    assert len(rows) == 2001 and set(rows[0]) == {"s", "U", "lower", "upper", "region"}
    assert rows[0]["region"] == "at_lower_zero" and rows[-1]["region"] == "at_upper"


def test_solve_is_bit_reproducible(solved, tmp_path):
    assert main(["solve", "--out", str(tmp_path), "--seed", "5"]) == EXIT_OK
    for f in solved.iterdir():
        if f.name == "summary.json":
            a, b = (json.loads(p.read_text()) for p in (f, tmp_path / f.name))
            a.pop("metadata"), b.pop("metadata")
            assert a == b
        else:
            assert f.read_bytes() == (tmp_path / f.name).read_bytes(), f.name


def test_solve_beta(tmp_path):
    cfg = _write(tmp_path / "cfg.json", {"distribution": {"family": "beta_symmetric", "alpha": 2.0}, "mc_samples": 0})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o"), "--grid-k", "801"]) == EXIT_OK
    mech = json.loads((tmp_path / "o" / "mechanism.json").read_text())
    assert [p["kind"] for p in mech["pieces"]] == ["exclude", "pooled", "efficient"]
    assert json.loads((tmp_path / "o" / "certificate.json").read_text())["passed"]


def test_solve_non_log_concave(tmp_path):
    cfg = _write(tmp_path / "cfg.json", {"distribution": {"family": "beta_symmetric", "alpha": 0.5}, "mc_samples": 0})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o"), "--grid-k", "801"]) == EXIT_OK
    assert not json.loads((tmp_path / "o" / "certificate.json").read_text())["available"]
    assert json.loads((tmp_path / "o" / "feasibility.json").read_text())["passed"]


def test_invalid_distribution_file(tmp_path):
    (tmp_path / "dens.csv").write_text("s,f\n0,0.7\n0.5,1.0\n1,1.3\n")
    cfg = _write(tmp_path / "cfg.json", {"distribution": {"family": "tabulated", "csv": "dens.csv"}})
    out = tmp_path / "o"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == EXIT_CONFIG
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "InvalidDistribution" and err["exit_code"] == EXIT_CONFIG


@pytest.mark.parametrize("data", [{"bogus": 1}, {"grid_n": 1000}, {"n": 0}, [1, 2]])
def test_bad_config(tmp_path, data):
    cfg = _write(tmp_path / "cfg.json", data)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_config(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_load_config_overrides(tmp_path):
    cfg = _write(tmp_path / "c.json", {"n": 3, "tolerances": {"feasibility": 1e-5}})
    rc = load_config(cfg, n=4, seed=None)
    assert rc.n == 4 and rc.feasibility_tol == 1e-5 and rc.seed == 0
    with pytest.raises(ConfigError):
        load_config(None, grid_k=2)


def test_sweep_single_matches_solve(solved, tmp_path):
    assert main(["sweep-n", "--out", str(tmp_path), "--n-list", "2"]) == EXIT_OK
    rows = _rows(tmp_path / "sweep.csv")
    assert list(rows[0]) == ["n", "V_n", "s_min", "s_max", "gap_to_asymptotic"]
    summary = json.loads((solved / "summary.json").read_text())
    assert float(rows[0]["V_n"]) == pytest.approx(summary["lp_value"], abs=1e-12)
    assert float(rows[0]["s_max"]) == pytest.approx(summary["s_max"], abs=1e-12)


def test_simulate_compare(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--trials", "200000"]) == EXIT_OK
    assert _rows(tmp_path / "full.csv")[0].keys() == {"position", "acceptance_rate", "se"}
    assert len(_rows(tmp_path / "empty.csv")) == 10
    verdict = json.loads((tmp_path / "comparison.json").read_text())
    assert verdict["verdict"] == "RejectCascadeDominatedByConcealment"


def test_simulate_custom_network(tmp_path):
    net = json.dumps({"n": 3, "observe": [[], [0], [0]]})
    assert main(["simulate", "--out", str(tmp_path), "--trials", "20000", "--network", net]) == EXIT_OK
    assert len(_rows(tmp_path / "queue.csv")) == 3
    assert main(["simulate", "--out", str(tmp_path), "--network", "{not json"]) == EXIT_CONFIG


def test_export_menu(tmp_path):
    assert main(["export-menu", "--out", str(tmp_path)]) == EXIT_OK
    menu = json.loads((tmp_path / "menu.json").read_text())
    los = [e["lambda_lo"] for e in menu["entries"]]
    assert los[1] == pytest.approx(0.375, abs=0.005) and los[2] == pytest.approx(0.75, abs=0.005)
    assert main(["export-menu", "--out", str(tmp_path), "--n", "3"]) == EXIT_CONFIG


def test_verify_reports_infeasible(solved, tmp_path):
    mech = json.loads((solved / "mechanism.json").read_text())
    mech["pieces"][0]["interval"][1] = 0.3
    mech["pieces"][1]["interval"][0] = 0.3
    path = _write(tmp_path / "mech.json", mech)
    cfg = _write(tmp_path / "cfg.json", {"mc_samples": 0})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path), "--mechanism", path]) == EXIT_OK
    report = json.loads((tmp_path / "verification.json").read_text())
    assert report["ic_min_margin"] < -1e-3 and not report["passed"]


def test_verify_default_path(solved, tmp_path):
    shutil.copy(solved / "mechanism.json", tmp_path / "mechanism.json")
    cfg = _write(tmp_path / "cfg.json", {"mc_samples": 0})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "verification.json").read_text())
    assert report["passed"] and report["epic_violation_mass"] > 0.01


def test_console_script():
    proc = subprocess.run(["mechlearn", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sweep-n" in proc.stdout
