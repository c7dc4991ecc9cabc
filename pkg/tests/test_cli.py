import json

import numpy as np
import pytest

from finslercut.cli import bundled_scenarios, main, parse_config, run
from finslercut.errors import ConfigError


def test_bundled_list_exact():
    assert bundled_scenarios() == [
        "euclid-two-points", "euclid-circle", "randers-wind05-point",
        "torus-point", "example26", "euclid-three-points"]


def test_all_bundled_parse():
    for name in bundled_scenarios():
        sc = parse_config(name)
        assert sc.grid_h > 0
        assert sc.cset.primitives


def test_randers_scenario_encodes_wind():
    from finslercut.metric import norm

    sc = parse_config("randers-wind05-point")
    assert sc.metric.kind == "randers"
    assert norm(sc.metric, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(2 / 3, rel=1e-12)
    g = sc.grid()
    assert g.shape == (256, 256)


def test_example26_geometry():
    import oracles

    sc = parse_config("example26")
    disc = sc.cset.primitives[0]
    centers = oracles.example26_centers(6)
    assert len(disc.bites) == 6
    for (bx, by, br), q in zip(disc.bites, centers):
        assert br == 1.0
        assert np.hypot(bx - q[0], by - q[1]) < 1e-9


def test_field_command_outputs(tmp_path):
    code = run("euclid-two-points", "field", tmp_path, grid_h=1 / 16, quiet=True)
    assert code == 0
    lines = (tmp_path / "field.csv").read_text().splitlines()
    assert lines[0] == "i,j,x,y,d,multiplicity"
    # d at chart point (0, 1) is sqrt(2)
    for ln in lines[1:]:
        i, j, x, y, d, mult = ln.split(",")
        if abs(float(x)) < 1e-9 and abs(float(y) - 1.0) < 1e-9:
            assert float(d) == pytest.approx(np.sqrt(2), abs=1e-6)
            break
    else:
        pytest.fail("node (0,1) missing from field.csv")
    assert (tmp_path / "field.bin").exists()


def test_cutlocus_command_outputs(tmp_path):
    code = run("euclid-two-points", "cutlocus", tmp_path, grid_h=1 / 16, quiet=True)
    assert code == 0
    obj = json.loads((tmp_path / "cutgraph.json").read_text())
    assert obj["edges"]
    svg = (tmp_path / "render.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_levels_command(tmp_path):
    code = run("euclid-two-points", "levels", tmp_path, grid_h=1 / 16, quiet=True)
    assert code == 0
    obj = json.loads((tmp_path / "levels_0.5.json").read_text())
    assert obj["count"] == 2


def test_verify_pass_and_determinism(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    code = run("euclid-two-points", "verify", out1, grid_h=1 / 16, quiet=True)
    assert code == 0
    rep = json.loads((out1 / "report.json").read_text())
    assert rep["passed"]
    run("euclid-two-points", "verify", out2, grid_h=1 / 16, quiet=True)
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


def test_malformed_config_exit_2(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("""
[domain]
mode = plane
bounds = -1 1 -1 1
[metric]
kind = warp-drive
[set]
primitive.1 = point 0 0
[grid]
h = 0.05
""")
    code = main(["--config", str(bad), "--out", str(tmp_path / "o"), "--quiet"])
    assert code == 2


def test_config_error_names_key(tmp_path):
    bad = tmp_path / "bad2.ini"
    bad.write_text("""
[domain]
mode = plane
bounds = -1 1 -1 1
[metric]
kind = euclidean
[set]
primitive.1 = point 0 0
[grid]
h = tiny
""")
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert "grid.h" in str(err.value)


def test_unknown_scenario_rejected():
    with pytest.raises(ConfigError):
        parse_config("no-such-scenario.ini")


def test_exit_code_reflects_failure(tmp_path, monkeypatch):
    # force a failing check by shrinking every tolerance to zero
    import finslercut.analysis as ana

    orig = ana.VerificationReport.add

    def strict_add(self, name, residual, tolerance, invert=False):
        return orig(self, name, residual, 0.0 if residual > 0 else tolerance, invert)

    monkeypatch.setattr(ana.VerificationReport, "add", strict_add)
    code = run("euclid-two-points", "verify", tmp_path, grid_h=1 / 8, quiet=True)
    assert code == 1


def test_fcl_threads_env_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("FCL_THREADS", "not-a-number")
    code = main(["--config", "euclid-two-points", "--out", str(tmp_path),
                 "--command", "field", "--grid-h", "0.125", "--quiet"])
    assert code == 2
    monkeypatch.setenv("FCL_THREADS", "4")
    code = main(["--config", "euclid-two-points", "--out", str(tmp_path),
                 "--command", "field", "--grid-h", "0.125", "--quiet"])
    assert code == 0
