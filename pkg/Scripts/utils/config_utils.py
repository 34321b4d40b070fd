"""
This module reads and writes experiment configuration files. An experiment
file is TOML with the sections [run], [dictionary], [solver], [learning],
[scenario], [quadrature] and [output]; every key is optional and falls
back to the default in config.py. Unknown sections or keys and values of
the wrong type are rejected.
"""

import zlib
from dataclasses import dataclass, field, fields, replace

import numpy as np
import tomlkit
from tomlkit.exceptions import ParseError

import config


class ConfigError(ValueError):
    """Raised on an invalid experiment configuration; names the offending key."""


# _________________________________________________________________________________________________


def make_rng(seed: int, stream: str) -> np.random.Generator:
    """
    Random generator of a named sub-stream of the run seed, so every
    component can be reproduced in isolation.

    Args:
        seed (int): Run seed.
        stream (str): Sub-stream name, e.g. "chords", "noise", "optimizer".

    Returns:
        np.random.Generator: Independent generator for (seed, stream).
    """
    return np.random.default_rng([int(seed), zlib.crc32(stream.encode("utf-8"))])


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class RunSettings:
    mode: str = config.MODE
    seed: int = config.SEED
    threads: int = config.THREADS
    ray_file: str = config.RAY_FILE


@dataclass(frozen=True)
class DictionarySettings:
    max_radial_degree: int = config.MAX_RADIAL_DEGREE
    max_angular_degree: int = config.MAX_ANGULAR_DEGREE
    fehf_grid_size: tuple = config.FEHF_GRID_SIZE


@dataclass(frozen=True)
class SolverSettings:
    lambda_factors: tuple = tuple(config.LAMBDA_FACTORS)
    max_iterations: int = config.MAX_ITERATIONS
    noise_level: float = config.NOISE_LEVEL
    blow_up_threshold: float = config.BLOW_UP_THRESHOLD
    chi2_tolerance: float = config.CHI2_TOLERANCE
    no_improvement_threshold: float = config.NO_IMPROVEMENT_THRESHOLD
    package_size: int = config.PACKAGE_SIZE
    package_threshold: float = config.PACKAGE_THRESHOLD


@dataclass(frozen=True)
class LearningSettings:
    enabled: bool = config.LEARNING_ENABLED
    global_xtol_rel: float = config.GLOBAL_XTOL_REL
    global_ftol_rel: float = config.GLOBAL_FTOL_REL
    local_xtol_rel: float = config.LOCAL_XTOL_REL
    local_ftol_rel: float = config.LOCAL_FTOL_REL
    max_evaluations: int = config.MAX_EVALUATIONS
    max_time_seconds: float = config.MAX_TIME_SECONDS


@dataclass(frozen=True)
class ScenarioSettings:
    plume_centers: tuple = tuple(tuple(c) for c in config.PLUME_CENTERS)
    base_radius: float = config.PLUME_BASE_RADIUS
    top_radius: float = config.PLUME_TOP_RADIUS
    amplitude: float = config.PLUME_AMPLITUDE
    n_rays: int = config.N_SYNTHETIC_RAYS
    depth_biased: bool = config.DEPTH_BIASED_RAYS
    reference_velocity: float | None = config.REFERENCE_VELOCITY
    grid_layers: int = config.GRID_LAYERS
    grid_n_lon: int = config.GRID_N_LON
    grid_n_lat: int = config.GRID_N_LAT


@dataclass(frozen=True)
class QuadratureSettings:
    gk_tolerance: float = config.GK_TOLERANCE
    gram_gk_tolerance: float = config.GRAM_GK_TOLERANCE
    latitude_gl_points: int = config.LATITUDE_GL_POINTS


@dataclass(frozen=True)
class OutputSettings:
    output_dir: str = config.OUTPUT_DIR
    directory_grids: str = config.DIRECTORY_GRIDS
    ledger_file: str = config.LEDGER_FILE
    elements_file: str = config.ELEMENTS_FILE
    summary_file: str = config.SUMMARY_FILE
    timing_file: str = config.TIMING_FILE


@dataclass(frozen=True)
class RunConfig:
    """All settings of one experiment, one attribute per file section."""

    run: RunSettings = field(default_factory=RunSettings)
    dictionary: DictionarySettings = field(default_factory=DictionarySettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    learning: LearningSettings = field(default_factory=LearningSettings)
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)
    output: OutputSettings = field(default_factory=OutputSettings)


# expected value kinds; tuples hold the element kind
_KINDS = {
    "mode": str,
    "seed": int,
    "threads": int,
    "ray_file": str,
    "max_radial_degree": int,
    "max_angular_degree": int,
    "fehf_grid_size": (int,),
    "lambda_factors": (float,),
    "max_iterations": int,
    "noise_level": float,
    "blow_up_threshold": float,
    "chi2_tolerance": float,
    "no_improvement_threshold": float,
    "package_size": int,
    "package_threshold": float,
    "enabled": bool,
    "global_xtol_rel": float,
    "global_ftol_rel": float,
    "local_xtol_rel": float,
    "local_ftol_rel": float,
    "max_evaluations": int,
    "max_time_seconds": float,
    "plume_centers": ((float,),),
    "base_radius": float,
    "top_radius": float,
    "amplitude": float,
    "n_rays": int,
    "depth_biased": bool,
    "reference_velocity": float,
    "grid_layers": int,
    "grid_n_lon": int,
    "grid_n_lat": int,
    "gk_tolerance": float,
    "gram_gk_tolerance": float,
    "latitude_gl_points": int,
    "output_dir": str,
    "directory_grids": str,
    "ledger_file": str,
    "elements_file": str,
    "summary_file": str,
    "timing_file": str,
}


# _________________________________________________________________________________________________


def _coerce(name: str, value, kind):
    """Check a parsed TOML value against its expected kind."""
    if isinstance(kind, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected an array, got {value!r}")
        return tuple(_coerce(f"{name}[{k}]", v, kind[0]) for k, v in enumerate(value))
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return str(value)


def parse_run_config(text: str) -> RunConfig:
    """
    Parse experiment TOML text over the defaults.

    Args:
        text (str): TOML document.

    Returns:
        RunConfig: The effective configuration, validated.

    Raises:
        ConfigError: On syntax errors, unknown sections or keys, wrong
        types or values that fail validation.
    """
    try:
        document = tomlkit.parse(text).unwrap()
    except ParseError as e:
        raise ConfigError(f"invalid TOML: {e}") from None

    sections = {f.name: f for f in fields(RunConfig)}
    result = RunConfig()
    for section_name, values in document.items():
        if section_name not in sections:
            raise ConfigError(f"unknown section [{section_name}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section_name}] must be a table")
        section = getattr(result, section_name)
        known = {f.name for f in fields(section)}
        updates = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown key {section_name}.{key}")
            updates[key] = _coerce(f"{section_name}.{key}", value, _KINDS[key])
        result = replace(result, **{section_name: replace(section, **updates)})

    problems = validate_run_config(result)
    if problems:
        raise ConfigError("; ".join(problems))
    return result


def load_run_config(path: str) -> RunConfig:
    """Read and parse an experiment file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    return parse_run_config(text)


# _________________________________________________________________________________________________


def validate_run_config(cfg: RunConfig) -> list[str]:
    """
    List every invalid setting.

    Returns:
        list[str]: Problems as "section.key: reason"; empty if valid.
    """
    problems = []

    def check(ok: bool, message: str):
        if not ok:
            problems.append(message)

    run, dic, sol, lrn = cfg.run, cfg.dictionary, cfg.solver, cfg.learning
    scn, quad = cfg.scenario, cfg.quadrature
    check(run.mode in ("synthetic", "rayfile"), "run.mode: synthetic or rayfile")
    check(run.threads >= 1, "run.threads: at least 1")
    if run.mode == "rayfile":
        check(bool(run.ray_file), "run.ray_file: required in rayfile mode")
        check(
            len(sol.lambda_factors) == 1,
            "solver.lambda_factors: a single value in rayfile mode",
        )

    check(dic.max_radial_degree >= 0, "dictionary.max_radial_degree: non-negative")
    check(dic.max_angular_degree >= 0, "dictionary.max_angular_degree: non-negative")
    check(
        len(dic.fehf_grid_size) == 3 and all(k >= 0 for k in dic.fehf_grid_size),
        "dictionary.fehf_grid_size: three non-negative counts",
    )

    check(len(sol.lambda_factors) > 0, "solver.lambda_factors: non-empty")
    check(all(x > 0 for x in sol.lambda_factors), "solver.lambda_factors: positive")
    check(sol.max_iterations >= 0, "solver.max_iterations: non-negative")
    for name in ("noise_level", "blow_up_threshold", "package_threshold"):
        check(getattr(sol, name) >= 0, f"solver.{name}: non-negative")
    for name in ("chi2_tolerance", "no_improvement_threshold"):
        check(getattr(sol, name) > 0, f"solver.{name}: positive")
    check(sol.package_size >= 1, "solver.package_size: at least 1")

    for name in (
        "global_xtol_rel",
        "global_ftol_rel",
        "local_xtol_rel",
        "local_ftol_rel",
    ):
        check(getattr(lrn, name) > 0, f"learning.{name}: positive")
    check(lrn.max_evaluations >= 1, "learning.max_evaluations: at least 1")
    check(lrn.max_time_seconds > 0, "learning.max_time_seconds: positive")

    check(
        all(len(c) == 2 for c in scn.plume_centers),
        "scenario.plume_centers: [lon, lat] pairs",
    )
    check(0 < scn.base_radius and 0 < scn.top_radius, "scenario radii: positive")
    check(scn.n_rays >= 0, "scenario.n_rays: non-negative")
    check(
        scn.reference_velocity is None or scn.reference_velocity > 0,
        "scenario.reference_velocity: positive",
    )
    check(scn.grid_layers >= 1, "scenario.grid_layers: at least 1")
    check(scn.grid_n_lon >= 2 and scn.grid_n_lat >= 2, "scenario grid: at least 2x2")

    check(quad.gk_tolerance > 0, "quadrature.gk_tolerance: positive")
    check(quad.gram_gk_tolerance > 0, "quadrature.gram_gk_tolerance: positive")
    check(quad.latitude_gl_points >= 1, "quadrature.latitude_gl_points: at least 1")
    return problems


# _________________________________________________________________________________________________


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def dump_run_config(cfg: RunConfig) -> str:
    """
    Serialize every effective setting as TOML; unset optional values
    (reference_velocity = None) are omitted.
    """
    document = tomlkit.document()
    document.add(tomlkit.comment("Effective experiment configuration"))
    for section_field in fields(RunConfig):
        section = getattr(cfg, section_field.name)
        table = tomlkit.table()
        for f in fields(section):
            value = getattr(section, f.name)
            if value is not None:
                table.add(f.name, _plain(value))
        document.add(section_field.name, table)
    return tomlkit.dumps(document)


# _________________________________________________________________________________________________


def apply_quadrature(cfg: RunConfig) -> None:
    """
    Install the quadrature settings as the process-wide defaults read by
    the inner-product routines.
    """
    config.GK_TOLERANCE = cfg.quadrature.gk_tolerance
    config.GRAM_GK_TOLERANCE = cfg.quadrature.gram_gk_tolerance
    config.LATITUDE_GL_POINTS = cfg.quadrature.latitude_gl_points
