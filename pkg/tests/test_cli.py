import json
import subprocess
import sys

import numpy as np
import pytest

from contactmech import cli
from contactmech.config import bundled_config_path

PZ = str(bundled_config_path("darboux-pz"))
INV5 = str(bundled_config_path("darboux-5d-involutive"))
NON5 = str(bundled_config_path("darboux-5d-noninvolutive"))


def run_cli(capsys, *args):
    code = cli.main(list(args))
    captured = capsys.readouterr()
    report = json.loads(captured.out) if captured.out else None
    return code, report, captured.err


@pytest.fixture
def points_file(tmp_path):
    path = tmp_path / "points.json"
    path.write_text(json.dumps({"points": [[2.0, 3.0, 5.0], [0.5, 1.0, 1.0, 1.5]], "r": 1.0}))
    return str(path)


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def test_check_passes_on_involutive_systems(capsys):
    code, report, err = run_cli(capsys, "check", PZ, "--samples", "25")
    assert code == 0
    assert report["passed"] is True
    assert [c["name"] for c in report["checks"]] == [
        "contact-condition",
        "involution",
        "rank",
    ]
    assert report["tool"]["name"] == "contactmech"
    assert len(report["config"]["sha256"]) == 64
    assert "elapsed" in err  # timing must stay off stdout


def test_check_fails_on_noninvolutive_system(capsys):
    code, report, _ = run_cli(capsys, "check", NON5, "--samples", "25")
    assert code == 1
    assert report["passed"] is False
    by_name = {c["name"]: c for c in report["checks"]}
    assert by_name["involution"]["passed"] is False
    assert by_name["contact-condition"]["passed"] is True


def test_check_seed_resolution(capsys, monkeypatch):
    _, base, _ = run_cli(capsys, "check", PZ, "--samples", "5")
    assert base["seed"] == 0  # config seed
    monkeypatch.setenv(cli.SEED_ENV, "7")
    _, env_run, _ = run_cli(capsys, "check", PZ, "--samples", "5")
    assert env_run["seed"] == 7
    _, flag_run, _ = run_cli(capsys, "check", PZ, "--samples", "5", "--seed", "11")
    assert flag_run["seed"] == 11  # flag beats environment
    monkeypatch.setenv(cli.SEED_ENV, "not-a-number")
    assert cli.main(["check", PZ, "--samples", "5"]) == 2
    capsys.readouterr()


def test_check_writes_report_file(capsys, tmp_path):
    out = tmp_path / "report.json"
    code, _, _ = run_cli(capsys, "check", PZ, "--samples", "5", "--out", str(out))
    assert code == 0
    again = cli.main(["check", PZ, "--samples", "5"])
    text = capsys.readouterr().out
    assert again == 0
    assert out.read_text() == text


def test_invalid_config_is_input_error(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert cli.main(["check", str(bad)]) == 2
    _, err = capsys.readouterr().out, capsys.readouterr().err
    missing = cli.main(["check", str(tmp_path / "absent.json")])
    assert missing == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# coisotropy
# ---------------------------------------------------------------------------

def test_coisotropy_agreeing_checks(capsys):
    code, report, _ = run_cli(
        capsys, "coisotropy", INV5, "--lambda", "1,1,1", "--points", "6"
    )
    assert code == 0
    assert report["checks_agree"] is True
    assert report["ray"] == [1.0, 1.0, 1.0]


def test_coisotropy_failing_checks_still_agree(capsys):
    code, report, _ = run_cli(
        capsys, "coisotropy", NON5, "--lambda", "1,1,1", "--points", "6"
    )
    assert code == 1
    assert report["passed"] is False
    assert report["checks_agree"] is True


def test_coisotropy_lambda_validation(capsys):
    assert cli.main(["coisotropy", PZ, "--lambda", "1,1,1"]) == 2
    assert cli.main(["coisotropy", PZ, "--lambda", "a,b"]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# integrate
# ---------------------------------------------------------------------------

def test_integrate_writes_trajectory(capsys, tmp_path):
    out = tmp_path / "traj.csv"
    code, report, _ = run_cli(
        capsys, "integrate", PZ, "--f", "1", "--x0", "2,3,5", "--t", "1.0",
        "--out", str(out),
    )
    assert code == 0
    assert report["status"] == "completed"
    assert np.allclose(report["endpoint"], [2.0, 3.0 / np.e, 5.0 / np.e], atol=1e-8)
    header, first = out.read_text().splitlines()[:2]
    assert header == "time,q,p,z"
    assert first.startswith("0.0,")


def test_integrate_domain_exit_is_reported_not_fatal(capsys, tmp_path):
    cfg = tmp_path / "exiting.json"
    cfg.write_text(
        json.dumps(
            {
                "name": "exiting",
                "n": 1,
                "coordinates": ["q", "p", "z"],
                "integrals": ["q", "z"],
                "region": {"q": [0.5, 2], "p": [0.5, 2], "z": [0.5, 2]},
                "positive": ["p", "z"],
            }
        )
    )
    out = tmp_path / "traj.csv"
    code, report, _ = run_cli(
        capsys, "integrate", str(cfg), "--f", "0", "--x0", "1,1,1", "--t", "5.0",
        "--out", str(out),
    )
    assert code == 0
    assert report["status"] == "exited_domain"
    assert report["passed"] is True
    assert report["reached_time"] < 5.0


def test_integrate_argument_validation(capsys, tmp_path):
    out = str(tmp_path / "t.csv")
    assert cli.main(["integrate", PZ, "--f", "5", "--x0", "2,3,5", "--t", "1", "--out", out]) == 2
    assert cli.main(["integrate", PZ, "--f", "0", "--x0", "2,3", "--t", "1", "--out", out]) == 2
    assert cli.main(["integrate", PZ, "--f", "0", "--x0", "a,b,c", "--t", "1", "--out", out]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# symplectize-verify
# ---------------------------------------------------------------------------

def test_symplectize_verify_passes(capsys):
    code, report, _ = run_cli(capsys, "symplectize-verify", PZ, "--samples", "20")
    assert code == 0
    names = [c["name"] for c in report["checks"]]
    assert names == [
        "omega-nondegenerate",
        "liouville-field",
        "lift-homogeneity",
        "theta-pairing",
        "bracket-correspondence",
    ]
    assert all(c["passed"] for c in report["checks"])


def test_symplectize_verify_5d(capsys):
    code, report, _ = run_cli(capsys, "symplectize-verify", INV5, "--samples", "10")
    assert code == 0
    assert report["passed"] is True


# ---------------------------------------------------------------------------
# action-angle
# ---------------------------------------------------------------------------

def test_action_angle_solves_points(capsys, points_file):
    code, report, _ = run_cli(
        capsys, "action-angle", PZ, "--section", "graph-z", "--points", points_file
    )
    assert code == 0
    assert report["section"]["passed"] is True
    assert report["section"]["sign"] == -1
    first, second = report["points"]
    assert np.allclose(first["y"], [2.0, -np.log(5.0)], atol=1e-7)
    assert np.allclose(first["A"], [3.0, 5.0], atol=1e-10)
    assert first["denominator_index"] == 1
    # the second point carried its own fiber value
    assert second["point"] == [0.5, 1.0, 1.0, 1.5]
    assert np.allclose(second["y"], [0.5, 0.0], atol=1e-7)


def test_action_angle_unknown_section(capsys, points_file):
    assert cli.main(["action-angle", PZ, "--section", "nope", "--points", points_file]) == 2
    capsys.readouterr()


def test_action_angle_bad_points_file(capsys, tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("[]")
    assert cli.main(["action-angle", PZ, "--section", "graph-z", "--points", str(empty)]) == 2
    ragged = tmp_path / "ragged.json"
    ragged.write_text("[[1, 2]]")
    assert cli.main(["action-angle", PZ, "--section", "graph-z", "--points", str(ragged)]) == 2
    assert cli.main(["action-angle", PZ, "--section", "graph-z", "--points", "/no/file"]) == 2
    capsys.readouterr()


def test_action_angle_failing_section_skips_points(capsys, tmp_path, points_file):
    data = json.loads(bundled_config_path("darboux-pz").read_text())
    data["sections"]["skew"] = {
        "params": ["L1", "L2"],
        "components": ["L1", "L1 / L2", "1", "L2"],
        "domain": {"L1": [0.5, 2], "L2": [0.5, 2]},
    }
    cfg = tmp_path / "skew.json"
    cfg.write_text(json.dumps(data))
    code, report, _ = run_cli(
        capsys, "action-angle", str(cfg), "--section", "skew", "--points", points_file
    )
    assert code == 1
    assert report["section"]["passed"] is False
    assert report["points"] == []


# ---------------------------------------------------------------------------
# Determinism and packaging
# ---------------------------------------------------------------------------

def test_reports_are_deterministic_in_process(capsys, points_file):
    args = ["action-angle", PZ, "--section", "graph-p", "--points", points_file]
    assert cli.main(args) == 0
    first = capsys.readouterr().out
    assert cli.main(args) == 0
    second = capsys.readouterr().out
    assert first == second


def test_module_entry_point_byte_identical():
    cmd = [sys.executable, "-m", "contactmech.cli", "check", PZ, "--samples", "10"]
    a = subprocess.run(cmd, capture_output=True, check=True)
    b = subprocess.run(cmd, capture_output=True, check=True)
    assert a.stdout == b.stdout
    assert a.stdout.endswith(b"}\n")


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    from contactmech import __version__

    assert capsys.readouterr().out.strip() == __version__
