import importlib
import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from mindisk.cli import main
from mindisk.exporters import read_json, read_obj, sha256_of_file, write_json
from mindisk.mse_solver import perturbed_helicoid_problem


def run(*args):
    return main([str(a) for a in args])


def manifest(directory):
    return read_json(directory / "manifest.json")


def test_generate_helicoid_writes_mesh_table_and_manifest(tmp_path):
    code = run("generate", "--surface", "helicoid", "--s", "0:2", "--t", "0:6.283",
               "--grid", "32x64", "--output", tmp_path)
    assert code == 0
    vertices, faces = read_obj(tmp_path / "helicoid.obj")
    assert vertices.shape == (33 * 65, 3)
    assert faces.shape == (2 * 32 * 64, 3)
    table = pd.read_csv(tmp_path / "helicoid.csv")
    assert list(table.columns) == ["s", "t", "x", "y", "z", "H", "K", "A2"]
    assert table["H"].abs().max() <= 1e-10
    outputs = manifest(tmp_path)["outputs"]
    assert outputs["helicoid.obj"] == sha256_of_file(tmp_path / "helicoid.obj")
    assert outputs["helicoid.csv"] == sha256_of_file(tmp_path / "helicoid.csv")


def test_scaled_helicoid_curvature_on_the_axis(tmp_path):
    assert run("generate", "--surface", "helicoid", "--scale", "0.01", "--output", tmp_path) == 0
    table = pd.read_csv(tmp_path / "helicoid.csv")
    assert table["A2"].max() == pytest.approx(2.0e4, rel=1e-9)


def test_generate_nonproper_graph(tmp_path):
    assert run("generate", "--surface", "nonproper", "--rin", "2", "--rout", "100", "--sheets", "8",
               "--output", tmp_path) == 0
    table = pd.read_csv(tmp_path / "nonproper.csv")
    assert table["u"].abs().max() < np.pi / 2.0


def test_generation_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("generate", "--surface", "catenoid", "--grid", "16x16", "--output", tmp_path / name) == 0
    assert manifest(tmp_path / "a")["outputs"] == manifest(tmp_path / "b")["outputs"]


def test_flags_override_the_run_file(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"surface": "catenoid", "grid": "8x8", "name": "neck"}))
    assert run("generate", "--config", config, "--grid", "4x4", "--output", tmp_path / "out") == 0
    vertices, _ = read_obj(tmp_path / "out" / "neck.obj")
    assert vertices.shape[0] == 25
    assert manifest(tmp_path / "out")["config"]["grid"] == "4x4"


def test_usage_errors_exit_64(tmp_path):
    assert run("generate", "--output", tmp_path) == 64
    assert run("generate", "--surface", "helicoid", "--grid", "big", "--output", tmp_path) == 64
    assert run("generate", "--bogus", "1") == 64
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("solve", "--problem", bad, "--output", tmp_path) == 64
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"surfaces": "helicoid"}))
    assert run("generate", "--config", unknown, "--output", tmp_path) == 64


def test_solve_exact_constant(tmp_path):
    assert run("solve", "--exact", "constant", "--resolution", "8", "--output", tmp_path) == 0
    report = read_json(tmp_path / "solve_report.json")
    assert report["converged"]
    assert report["iterations"] == 0
    assert report["max_error"] <= 1e-12
    assert set(manifest(tmp_path)["outputs"]) == {"solution.csv", "solve_report.json"}


def test_non_convergence_exits_2_with_report(tmp_path):
    domain, boundary = perturbed_helicoid_problem(2, amplitude=0.5, r_out=float(np.exp(3.0)),
                                                  n_sigma=12, per_sheet=8)
    problem = tmp_path / "problem.json"
    write_json(problem, {
        "domain": domain.to_dict(),
        "boundary": {k: getattr(boundary, k) for k in ("inner", "outer", "theta_min", "theta_max")},
        "config": {"max_newton_iters": 0},
    })
    assert run("solve", "--problem", problem, "--output", tmp_path / "out") == 2
    report = read_json(tmp_path / "out" / "solve_report.json")
    assert report["converged"] is False
    assert len(report["residual_history"]) == 1


def test_export_solution_to_obj(tmp_path):
    assert run("solve", "--exact", "constant", "--resolution", "8", "--output", tmp_path) == 0
    assert run("export", "--input", tmp_path / "solution.csv", "--rin", "1", "--rout", "2",
               "--sheets", "1", "--output", tmp_path / "mesh") == 0
    vertices, _ = read_obj(tmp_path / "mesh" / "solution.obj")
    assert vertices.shape == (81, 3)
    np.testing.assert_allclose(vertices[:, 2], 7.0, atol=1e-12)


def test_flat_plane_fails_the_blowup_hypothesis(tmp_path):
    assert run("generate", "--surface", "graph", "--preset", "zero", "--output", tmp_path) == 0
    code = run("verify", "--suite", "blowup", "--input", tmp_path / "graph.obj",
               "--curvature", tmp_path / "graph.csv", "--output", tmp_path / "v")
    assert code == 65


def test_builtin_helicoid_blowup_passes(tmp_path):
    assert run("verify", "--suite", "blowup", "--scale", "0.01", "--output", tmp_path) == 0
    report = read_json(tmp_path / "pair_report.json")
    assert report["margins"]["sup_bound"] == pytest.approx(0.75, rel=1e-6)


def test_structure_suite_on_planes(tmp_path):
    assert run("verify", "--suite", "structure", "--family", "plane", "--count", "2",
               "--output", tmp_path) == 0
    report = read_json(tmp_path / "structure_report.json")
    assert report["singular_set"]["curvature_unbounded"] is False
    assert report["checks"] == {"foliation_decreasing": True}
    assert report["foliation"]["strictly_decreasing"] is True
    assert pd.read_csv(tmp_path / "singular_set.csv").empty


def test_structure_suite_on_rescaled_helicoids(tmp_path):
    assert run("verify", "--suite", "structure", "--family", "rescaled-helicoid", "--count", "6",
               "--output", tmp_path) == 0
    report = read_json(tmp_path / "structure_report.json")
    assert report["singular_set"]["curvature_unbounded"] is True
    checks = report["checks"]
    assert {"census_two_components", "foliation_decreasing"} <= set(checks)
    assert all(checks.values())
    assert len(report["census"]) == 6
    assert all(c["component_count"] == 2 for c in report["census"])


def test_separation_suite_on_a_helicoid_sheet(tmp_path):
    assert run("generate", "--surface", "helicoid-sheet", "--rin", "1", "--rout", "100", "--sheets", "2",
               "--output", tmp_path) == 0
    assert run("verify", "--suite", "separation", "--input", tmp_path / "helicoid-sheet.csv",
               "--rin", "1", "--rout", "100", "--sheets", "2", "--output", tmp_path / "v") == 0
    report = read_json(tmp_path / "v" / "separation_report.json")
    assert report["embedded"] is True
    assert report["handedness"] == "right"
    assert report["sublinear"]["alpha_hat"] <= 1e-9


def test_console_script_points_at_main():
    tomllib = pytest.importorskip("tomllib")
    with open(Path(__file__).resolve().parents[1] / "pyproject.toml", "rb") as fh:
        project = tomllib.load(fh)["project"]
    module, _, attr = project["scripts"]["mindisk"].partition(":")
    assert getattr(importlib.import_module(module), attr) is main
    with pytest.raises(SystemExit) as excinfo:
        run("--help")
    assert excinfo.value.code == 0
