"""
Command-line entry point: run an inversion from an experiment file,
validate an experiment file, or generate a synthetic ray file.
"""

import sys
from dataclasses import replace

import click

from Scripts.generate_rays import generate_rays
from Scripts.run_inversion import run_inversion
from Scripts.utils.config_utils import ConfigError, load_run_config, validate_run_config

# every domain error derives from one of these
RUN_ERRORS = (ValueError, ArithmeticError, OSError)


@click.group()
def cli() -> None:
    """Sparse ray tomography on the ball by learning matching pursuit."""


@cli.command()
@click.option("--config", "config_path", required=True, help="Experiment TOML file.")
@click.option("--threads", type=int, default=None, help="Worker thread cap.")
@click.option("--seed", type=int, default=None, help="Override the run seed.")
def run(config_path: str, threads: int | None, seed: int | None) -> None:
    """Run the inversion described by an experiment file."""
    try:
        cfg = load_run_config(config_path)
        overrides = {}
        if threads is not None:
            overrides["threads"] = threads
        if seed is not None:
            overrides["seed"] = seed
        if overrides:
            cfg = replace(cfg, run=replace(cfg.run, **overrides))
            problems = validate_run_config(cfg)
            if problems:
                raise ConfigError("; ".join(problems))
        run_inversion(cfg)
    except RUN_ERRORS as e:
        print(f"[ERROR] {type(e).__name__}: {e}", file=sys.stderr)
        sys.exit(1)


@cli.command()
@click.option("--config", "config_path", required=True, help="Experiment TOML file.")
def validate(config_path: str) -> None:
    """Check an experiment file without running it."""
    try:
        cfg = load_run_config(config_path)
    except ConfigError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        sys.exit(1)
    print(f"[INFO] {config_path} is valid ({cfg.run.mode} mode)")


@cli.command("gen-rays")
@click.option("--n", "n_rays", type=int, required=True, help="Number of chords.")
@click.option("--seed", type=int, required=True, help="Seed of the chords stream.")
@click.option("--out", required=True, help="Output ray file.")
def gen_rays(n_rays: int, seed: int, out: str) -> None:
    """Write synthetic chords with plume delays in the ray file format."""
    if n_rays < 0:
        print("[ERROR] --n must be non-negative", file=sys.stderr)
        sys.exit(1)
    try:
        generate_rays(n_rays, seed, out)
    except OSError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    cli()
