import os

import numpy as np
import pytest
from click.testing import CliRunner

import config
from main import cli
from Scripts.utils.export_utils import (
    load_elements_catalog,
    load_ledger,
    load_summary,
)
from Scripts.utils.ray_utils import load_rays

DATA = os.path.join(os.path.dirname(__file__), "data")

SMALL = """
[dictionary]
max_radial_degree = 1
max_angular_degree = 2
fehf_grid_size = [2, 3, 2]

[quadrature]
latitude_gl_points = 200
"""


@pytest.fixture(autouse=True)
def quadrature_defaults(monkeypatch):
    """Runs install their quadrature settings process-wide; restore them."""
    for name in ("GK_TOLERANCE", "GRAM_GK_TOLERANCE", "LATITUDE_GL_POINTS"):
        monkeypatch.setattr(config, name, getattr(config, name))


def _experiment(tmp_path, name: str, body: str, scenario: str = "") -> tuple[str, str]:
    out = tmp_path / f"{name}_results"
    path = tmp_path / f"{name}.toml"
    text = (
        f"{body}\n[scenario]\ngrid_layers = 2\n{scenario}\n"
        f'[output]\noutput_dir = "{out}"\n'
    )
    path.write_text(text, encoding="utf-8")
    return str(path), str(out)


def test_validate_accepts_a_good_file(tmp_path):
    path, _ = _experiment(tmp_path, "ok", SMALL)
    result = CliRunner().invoke(cli, ["validate", "--config", path])
    assert result.exit_code == 0
    assert "is valid (synthetic mode)" in result.output


def test_validate_rejects_unknown_keys(tmp_path):
    path, _ = _experiment(tmp_path, "bad", "[solver]\nmax_iter = 3\n")
    result = CliRunner().invoke(cli, ["validate", "--config", path])
    assert result.exit_code == 1
    assert "unknown key solver.max_iter" in result.stderr


def test_run_reports_a_missing_config(tmp_path):
    result = CliRunner().invoke(cli, ["run", "--config", str(tmp_path / "absent.toml")])
    assert result.exit_code == 1
    assert "ConfigError" in result.stderr


def test_gen_rays(tmp_path):
    out = str(tmp_path / "rays" / "chords.txt")
    args = ["gen-rays", "--seed", "2", "--out", out]
    result = CliRunner().invoke(cli, args + ["--n", "6"])
    assert result.exit_code == 0
    rays = load_rays(out)
    assert len(rays) == 6
    assert np.all(rays.delays >= 0.0)

    result = CliRunner().invoke(cli, args + ["--n", "-1"])
    assert result.exit_code == 1


def test_rayfile_run(tmp_path):
    ray_file = os.path.join(DATA, "ten_rays.txt")
    body = SMALL + f"""
[run]
mode = "rayfile"
ray_file = "{ray_file}"

[solver]
lambda_factors = [0.01]
max_iterations = 5

[learning]
enabled = false
"""
    path, out = _experiment(tmp_path, "rayfile", body)
    result = CliRunner().invoke(cli, ["run", "--config", path])
    assert result.exit_code == 0, result.output

    summary = load_summary(os.path.join(out, "summary.json"))
    assert summary["mode"] == "rayfile"
    assert summary["n_rays"] == 10
    assert summary["lambda_factor"] == 0.01
    assert "rrmse" not in summary
    assert 1 <= summary["iterations"] <= 5
    # rays carry their own sigmas, so only the weighted misfit is bounded by y
    assert np.isfinite(summary["relative_data_error"])

    ledger = load_ledger(os.path.join(out, "ledger.jsonl"))
    assert len(ledger) == summary["iterations"] + 1
    assert ledger[-1]["stop_reason"] == summary["stop_reason"]
    catalog = load_elements_catalog(os.path.join(out, "elements.json"))
    assert len(catalog) == summary["iterations"]
    assert "wall_time_seconds" in load_summary(os.path.join(out, "timing.json"))
    assert os.path.exists(os.path.join(out, "config.toml"))
    grids = os.listdir(os.path.join(out, "grids"))
    assert sorted(name.split("_layer")[0] for name in grids) == ["approximation"] * 2


def test_synthetic_runs_are_reproducible(tmp_path):
    body = SMALL + """
[run]
seed = 4

[solver]
lambda_factors = [0.1, 0.01]
max_iterations = 3

[learning]
enabled = false
"""
    scenario = "n_rays = 120\nreference_velocity = 10.0\n"
    summaries = []
    for name in ("first", "second"):
        path, out = _experiment(tmp_path, name, body, scenario)
        result = CliRunner().invoke(cli, ["run", "--config", path])
        assert result.exit_code == 0, result.output
        with open(os.path.join(out, "summary.json"), "rb") as f:
            summaries.append(f.read())
    assert summaries[0] == summaries[1]

    summary = load_summary(os.path.join(out, "summary.json"))
    assert summary["seed"] == 4
    assert [s["lambda_factor"] for s in summary["lambda_scores"]] == [0.01, 0.1]
    assert summary["rrmse"] == min(s["rrmse"] for s in summary["lambda_scores"])
    assert len(summary["layer_errors"]) == 2
    grids = os.listdir(os.path.join(out, "grids"))
    assert {name.split("_layer")[0] for name in grids} == {
        "approximation",
        "approximation_dc_c",
        "truth",
        "truth_dc_c",
        "abs_error",
    }


def test_seed_override(tmp_path):
    body = SMALL + """
[solver]
max_iterations = 0
"""
    path, out = _experiment(tmp_path, "seeded", body, "n_rays = 10\n")
    args = ["run", "--config", path, "--seed", "9", "--threads", "2"]
    result = CliRunner().invoke(cli, args)
    assert result.exit_code == 0, result.output
    summary = load_summary(os.path.join(out, "summary.json"))
    assert summary["seed"] == 9
    assert summary["iterations"] == 0
    assert summary["stop_reason"] == "max_iter"

    result = CliRunner().invoke(cli, ["run", "--config", path, "--threads", "0"])
    assert result.exit_code == 1


@pytest.mark.slow
def test_full_dictionary_synthetic_run(tmp_path):
    body = """
[solver]
lambda_factors = [0.001]
max_iterations = 10

[learning]
max_evaluations = 100
"""
    path, out = _experiment(tmp_path, "full", body, "n_rays = 300\n")
    result = CliRunner().invoke(cli, ["run", "--config", path])
    assert result.exit_code == 0, result.output

    summary = load_summary(os.path.join(out, "summary.json"))
    assert 0.0 <= summary["relative_data_error"] < 1.0
    assert np.isfinite(summary["rrmse"])
    ledger = load_ledger(os.path.join(out, "ledger.jsonl"))
    objectives = [row["tikhonov"] for row in ledger]
    assert all(b <= a * (1.0 + 1e-12) for a, b in zip(objectives, objectives[1:]))
