import glob
import os

import numpy as np
import pytest

import config
from Scripts.utils.config_utils import (
    ConfigError,
    RunConfig,
    apply_quadrature,
    dump_run_config,
    load_run_config,
    make_rng,
    parse_run_config,
    validate_run_config,
)

ROOT = os.path.dirname(os.path.dirname(__file__))


def test_empty_file_gives_the_defaults():
    cfg = parse_run_config("")
    assert cfg == RunConfig()
    assert cfg.run.mode == "synthetic"
    assert cfg.solver.lambda_factors == (1e-1, 1e-2, 1e-3, 1e-4)
    assert cfg.dictionary.fehf_grid_size == (5, 5, 5)


def test_overrides():
    cfg = parse_run_config(
        """
[run]
seed = 7

[solver]
lambda_factors = [0.5]
max_iterations = 12

[scenario]
plume_centers = [[10.0, 20.0]]
reference_velocity = 10
"""
    )
    assert cfg.run.seed == 7
    assert cfg.solver.lambda_factors == (0.5,)
    assert cfg.solver.max_iterations == 12
    assert cfg.scenario.plume_centers == ((10.0, 20.0),)
    assert cfg.scenario.reference_velocity == 10.0
    assert isinstance(cfg.scenario.reference_velocity, float)
    assert cfg.learning == RunConfig().learning


@pytest.mark.parametrize(
    "text, needle",
    [
        ("[plots]\nshow = true\n", "plots"),
        ("[solver]\nmax_iter = 3\n", "solver.max_iter"),
        ("[solver]\nmax_iterations = 2.5\n", "solver.max_iterations"),
        ("[solver]\nmax_iterations = true\n", "solver.max_iterations"),
        ("[learning]\nenabled = 1\n", "learning.enabled"),
        ("[solver]\nlambda_factors = 0.1\n", "solver.lambda_factors"),
        ("[solver]\nlambda_factors = [0.1, \"x\"]\n", "solver.lambda_factors[1]"),
        ("[run]\nmode = \"live\"\n", "run.mode"),
        ("[solver]\nchi2_tolerance = 0\n", "solver.chi2_tolerance"),
        ("[scenario]\ngrid_n_lat = 1\n", "scenario grid"),
        ("[run\n", "invalid TOML"),
    ],
)
def test_invalid_files_name_the_problem(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_run_config(text)
    assert needle in str(info.value)


def test_rayfile_mode_needs_a_file_and_one_lambda():
    with pytest.raises(ConfigError) as info:
        parse_run_config('[run]\nmode = "rayfile"\n')
    assert "run.ray_file" in str(info.value)
    assert "solver.lambda_factors" in str(info.value)
    cfg = parse_run_config(
        '[run]\nmode = "rayfile"\nray_file = "rays.txt"\n'
        "[solver]\nlambda_factors = [0.01]\n"
    )
    assert validate_run_config(cfg) == []


def test_dump_parses_back():
    cfg = parse_run_config(
        "[run]\nseed = 3\n[dictionary]\nfehf_grid_size = [2, 3, 4]\n"
    )
    text = dump_run_config(cfg)
    assert parse_run_config(text) == cfg
    assert "reference_velocity" not in text
    assert dump_run_config(parse_run_config(text)) == text


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "absent.toml"))


@pytest.mark.parametrize(
    "path", sorted(glob.glob(os.path.join(ROOT, "experiments", "*.toml")))
)
def test_shipped_experiments_are_valid(path):
    cfg = load_run_config(path)
    assert validate_run_config(cfg) == []


def test_sub_streams_are_reproducible_and_independent():
    a = make_rng(1, "noise").standard_normal(4)
    assert np.array_equal(a, make_rng(1, "noise").standard_normal(4))
    assert not np.array_equal(a, make_rng(1, "chords").standard_normal(4))
    assert not np.array_equal(a, make_rng(2, "noise").standard_normal(4))


def test_apply_quadrature(monkeypatch):
    for name in ("GK_TOLERANCE", "GRAM_GK_TOLERANCE", "LATITUDE_GL_POINTS"):
        monkeypatch.setattr(config, name, getattr(config, name))
    cfg = parse_run_config(
        "[quadrature]\ngram_gk_tolerance = 1e-6\nlatitude_gl_points = 64\n"
    )
    apply_quadrature(cfg)
    assert config.GRAM_GK_TOLERANCE == 1e-6
    assert config.LATITUDE_GL_POINTS == 64
