import json
import subprocess
import sys

import pytest

from zonalhvac import cli, scenario


def run(*args):
    return cli.main([str(a) for a in args])


def small_plan():
    return {"width": 2.0, "height": 2.0,
            "outlets": [{"side": "bottom", "start": 0.5, "end": 1.0}, {"side": "top", "start": 1.0, "end": 1.5}],
            "inlet": {"side": "left", "start": 0.75, "end": 1.25},
            "heaters": [[0.5, 0.5, 1.0, 1.0], [1.0, 1.0, 1.5, 1.5]],
            "zones": [[0.0, 0.0, 1.0, 1.0], [1.0, 1.0, 2.0, 2.0]]}


def write_config(path, data):
    path.write_text(json.dumps(data))
    return path


def test_mesh_info(capsys):
    assert run("mesh-info") == 0
    info = json.loads(capsys.readouterr().out)
    assert info["N_pl"] == 420 and info["N_u"] == 1806


def test_missing_t_f_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"horizon": {"dt": 10}})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_CONFIG
    assert "t_f" in capsys.readouterr().err


def test_bad_zone_is_a_config_error(tmp_path):
    assert run("simulate", "--zone", "40", "--out", tmp_path) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit):
        run("simulate", "--zone", "lounge")


def test_solver_failure_exit_code(tmp_path, capsys):
    plan = small_plan()
    plan["inlet"] = None
    cfg = write_config(tmp_path / "c.json", {"floorplan": plan, "mesh": {"target_h": 0.25}, "zone": 0})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_SOLVER
    assert "inlet" in capsys.readouterr().err


def test_simulate_artifacts(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"zone": 0, "controls": {"v": 2.0, "u_o": 0.4}})
    out = tmp_path / "o"
    assert run("simulate", "--config", cfg, "--out", out) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["energy.json", "flow.csv", "flow.vtk", "summary.json", "temperature_0000.vtk",
                     "temperature_0015.vtk", "temperature_0030.vtk", "trajectory.csv"]
    energy = json.loads((out / "energy.json").read_text())
    assert energy["heater_energy_Wh"] == pytest.approx(2000 * 300 / 3600)
    assert len((out / "trajectory.csv").read_text().splitlines()) == 32


def test_explicit_theta_flag_reports_instability(tmp_path):
    out = tmp_path / "o"
    with pytest.warns(RuntimeWarning):
        assert run("simulate", "--theta", "0", "--zone", "3", "--out", out) == 0
    assert "unstable" in json.loads((out / "summary.json").read_text())["stability_warning"]


def test_repeated_runs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"zone": 13, "solver": {"opt_max_iters": 10}})
    for cmd in ("simulate", "optimize"):
        outs = [tmp_path / f"{cmd}{i}" for i in range(2)]
        for o in outs:
            assert run(cmd, "--config", cfg, "--out", o) == 0
        files = sorted(p.name for p in outs[0].iterdir())
        assert files == sorted(p.name for p in outs[1].iterdir())
        for name in files:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_optimize_artifacts(tmp_path):
    out = tmp_path / "o"
    cfg = write_config(tmp_path / "c.json", {"solver": {"opt_max_iters": 5}})
    assert run("optimize", "--config", cfg, "--zone", "whole", "--out", out) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["zone"] == "whole" and len(result["per_zone"]) == 18
    assert result["iterations"] == 5
    assert (out / "iterations.csv").read_text().splitlines()[0].startswith("iter,cost")
    assert (out / "temperature_final.vtk").exists()


def test_sweep_with_too_few_zones(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"floorplan": small_plan(), "mesh": {"target_h": 0.25},
                                             "solver": {"opt_max_iters": 3}})
    out = tmp_path / "o"
    assert run("sweep", "--seq", "--config", cfg, "--out", out) == cli.EXIT_SWEEP
    summary = json.loads((out / "summary.json").read_text())
    assert [r["zone"] for r in summary["rows"]] == [0, 1, "whole"]
    assert len((out / "summary.csv").read_text().splitlines()) == 4
    assert "whole_in_zones" in summary


def test_parallel_sweep_matches_sequential(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"floorplan": small_plan(), "mesh": {"target_h": 0.25},
                                             "solver": {"opt_max_iters": 3}})
    run("sweep", "--seq", "--config", cfg, "--out", tmp_path / "a")
    run("sweep", "--workers", "2", "--config", cfg, "--out", tmp_path / "b")
    assert (tmp_path / "a/summary.csv").read_bytes() == (tmp_path / "b/summary.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "zonalhvac", "mesh-info"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["N_v"] == 242


def test_config_round_trip_through_file(tmp_path):
    cfg = scenario.validate({"zone": 7, "solver": {"theta": 0.5}})
    path = tmp_path / "c.json"
    path.write_text(cfg.dumps())
    assert scenario.load(path).dumps() == cfg.dumps()
