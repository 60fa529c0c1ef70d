import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from serrinwarp.cli import RunConfig, load_config, main, parse_domain, parse_number, run_suite


def run(capsys, *argv):
    status = main(list(argv))
    out = capsys.readouterr()
    return status, out.out, out.err


def test_pohozaev_example(capsys, tmp_path):
    out = tmp_path / "p.json"
    status, text, _ = run(capsys, "verify", "pohozaev", "--entry", "space_form:k=0", "--n", "2",
                          "--ball", "1.0", "--h", "1e-3,5e-4", "--out", str(out))
    assert status == 0
    bundle = json.loads(out.read_text())
    rows = [c for c in bundle["checks"] if c["name"] == "pohozaev"]
    assert len(rows) == 2 and all(r["pass"] for r in rows)
    assert all(r["lhs"] == pytest.approx(math.pi / 4, abs=1e-6) for r in rows)
    order = next(c for c in bundle["checks"] if c["name"] == "pohozaev_order")
    assert order["order_estimate"] == pytest.approx(2.0, abs=0.1)
    assert "PASS pohozaev_order" in text


def test_check_curvature_example(capsys, tmp_path):
    out = tmp_path / "c.json"
    status, _, _ = run(capsys, "check-curvature", "--entry", "scaled_model:rho=1,k=-1", "--n", "3",
                       "--out", str(out))
    assert status == 0
    row = json.loads(out.read_text())["checks"][0]
    assert row["name"] == "ricci_bound" and abs(row["margin"]) <= 1e-12


def test_cylinder_band_example(capsys):
    status, text, _ = run(capsys, "solve-2d", "--entry", "cylinder", "--domain", "band:w=0.5", "--report-defect")
    assert status == 0
    assert "PASS boundary_gradient_defect" in text
    assert "hypothesis σ′≢0 violated; rigidity not expected" in text


def test_ellipse_defect_fails_unless_expected_nonconstant(capsys):
    args = ["solve-2d", "--domain", "ellipse:a=1,b=0.6,x0=3", "--report-defect", "--h", "0.03125"]
    assert run(capsys, *args)[0] == 1
    assert run(capsys, *args, "--expect", "nonconstant")[0] == 0


def test_reports_are_byte_identical(capsys, tmp_path):
    # the output path is part of the config, so both runs write to the same file
    out = tmp_path / "a.json"
    reports = []
    for _ in range(2):
        run(capsys, "geodesics", "distance", "--entry", "space_form:k=-1", "--pairs", "3", "--seed", "7",
            "--h", "0.03125", "--out", str(out))
        reports.append(out.read_bytes())
    assert reports[0] == reports[1]


def test_seed_changes_random_pairs(capsys, tmp_path):
    texts = []
    for seed in ("0", "1"):
        p = tmp_path / f"{seed}.json"
        run(capsys, "geodesics", "distance", "--entry", "linear", "--pairs", "2", "--seed", seed,
            "--h", "0.03125", "--out", str(p))
        texts.append(p.read_text())
    assert texts[0] != texts[1]


def test_errors_exit_two_and_name_the_check(capsys, tmp_path):
    status, _, err = run(capsys, "check-curvature", "--entry", "nosuch")
    assert status == 2 and "build_entry" in err
    status, _, err = run(capsys, "verify", "pohozaev", "--h", "1e-3,2e-3")
    assert status == 2 and "strictly decreasing" in err
    out = tmp_path / "o.json"
    status, _, err = run(capsys, "solve-2d", "--domain", "ball:r0=0.3,radius=0.5", "--out", str(out))
    assert status == 2 and "ChartOverflowError" in err
    bundle = json.loads(out.read_text())
    assert bundle["error"]["type"] == "ChartOverflowError" and not bundle["all_pass"]


def test_solve_2d_requires_domain(capsys):
    assert run(capsys, "solve-2d")[0] == 2


def test_key_value_config(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# hyperbolic ball\nentry = space_form:k=-1\nn = 3\nh = 2e-3, 1e-3\nball = 0.8\n")
    out = tmp_path / "r.json"
    status, _, _ = run(capsys, "solve-radial", "--config", str(cfg), "--out", str(out))
    assert status == 0
    bundle = json.loads(out.read_text())
    assert bundle["config"]["n"] == 3 and bundle["config"]["h"] == [2e-3, 1e-3]
    assert bundle["entry"]["name"] == "space_form"


def test_json_config_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"entry": "space_form:k=1", "n": 2, "ball": 0.5}))
    out = tmp_path / "r.json"
    assert run(capsys, "solve-radial", "--config", str(cfg), "--n", "3", "--out", str(out))[0] == 0
    assert json.loads(out.read_text())["config"]["n"] == 3


def test_unknown_config_key_exits_two(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("entry = linear\npartitions = 4\n")
    status, _, err = run(capsys, "check-curvature", "--config", str(cfg))
    assert status == 2 and "partitions" in err
    with pytest.raises(ValueError):
        load_config(cfg)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(command="nosuch")
    with pytest.raises(ValueError):
        RunConfig(command="solve-radial", h=(1e-3, -1e-3))
    with pytest.raises(ValueError):
        RunConfig(command="solve-2d", expect="maybe")


def test_parsers():
    assert parse_number("pi/4") == pytest.approx(math.pi / 4)
    assert parse_number("-2e-3") == -2e-3
    with pytest.raises(ValueError):
        parse_number("__import__('os')")
    assert parse_domain("ellipse:a=1,b=0.6,x0=3") == ("ellipse", {"a": 1.0, "b": 0.6, "x0": 3.0})


def test_radial_profile_csv(capsys, tmp_path):
    path = tmp_path / "u.csv"
    assert run(capsys, "solve-radial", "--entry", "space_form:k=0", "--h", "0.01", "--csv", str(path))[0] == 0
    rows = list(csv.reader(path.open()))
    r, u = float(rows[1][0]), float(rows[1][1])
    assert r == 0.0 and u == pytest.approx(0.25, abs=1e-8)


def test_field_csv_and_mask_artifacts(capsys, tmp_path):
    field, mask = tmp_path / "f.csv", tmp_path / "m.npz"
    out = tmp_path / "s.json"
    status, _, _ = run(capsys, "solve-2d", "--domain", "ball:r0=2,theta0=0,radius=0.5", "--h", "0.0625",
                       "--csv", str(field), "--mask-out", str(mask), "--out", str(out))
    assert status == 0
    data = np.loadtxt(field, delimiter=",", skiprows=1)
    assert data.shape[1] == 3 and data[:, 2].max() == pytest.approx(0.0625, rel=0.05)
    with np.load(mask) as z:
        assert z["inside"].sum() == json.loads(out.read_text())["data"]["fields"][0]["n_inside"]


def test_catalog_list(capsys):
    status, text, _ = run(capsys, "catalog", "list")
    assert status == 0
    assert "space_form" in text and "cylinder" in text
    status, text, _ = run(capsys, "catalog", "list", "--entry", "glued")
    assert status == 0 and text.count("\n") >= 1 and "glued" in text


def test_geodesics_shoot_and_star(capsys, tmp_path):
    path = tmp_path / "g.csv"
    status, text, _ = run(capsys, "geodesics", "shoot", "--entry", "space_form:k=-1", "--start", "1,0",
                          "--direction", "0.5", "--length", "1", "--csv", str(path))
    assert status == 0 and "PASS clairaut_drift" in text
    assert len(path.read_text().splitlines()) > 100
    status, text, _ = run(capsys, "geodesics", "star", "--entry", "space_form:k=-1", "--center", "1,0",
                          "--radius", "0.4", "--rays", "16")
    assert status == 0 and "PASS star_shaped" in text


def test_distance_between_points(capsys, tmp_path):
    out = tmp_path / "d.json"
    status, _, _ = run(capsys, "geodesics", "distance", "--entry", "linear", "--p", "2,0", "--q", "2,0.5",
                       "--out", str(out))
    assert status == 0
    row = next(c for c in json.loads(out.read_text())["checks"] if c["name"] == "distance")
    assert row["value"] == pytest.approx(4 * math.sin(0.25), abs=1e-6)


@pytest.mark.parametrize("action", ["pfunction", "compat", "identity", "intermediate"])
def test_verify_actions_pass_on_space_form(capsys, action):
    args = ["verify", action, "--entry", "space_form:k=-1", "--n", "3"]
    if action == "identity":
        args = ["verify", action, "--entry", "exponential:k=-1", "--n", "3"]
    status, text, _ = run(capsys, *args)
    assert status == 0, text


def test_verify_on_2d_domain(capsys):
    status, text, _ = run(capsys, "verify", "intermediate", "--entry", "linear",
                          "--domain", "ball:r0=2,theta0=0,radius=0.5", "--h", "0.0625,0.03125")
    assert status == 0, text
    assert "INFO sigma_dr_divergence_order" in text


def test_run_suite_returns_bundle():
    bundle, status = run_suite(RunConfig(command="check-curvature", entry="glued"))
    assert status == 0 and bundle["all_pass"] and bundle["entry"]["name"] == "glued"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "serrinwarp", "check-curvature", "--quiet"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0 and proc.stdout == ""
