"""
Stage that runs one inversion from an experiment configuration.

In synthetic mode it builds the plume ground truth, shoots synthetic
chords, synthesizes and perturbs the delays, selects lambda on the grid by
the lowest RRMSE and exports truth, approximation and error grids. In
rayfile mode the delays come from the ray file and the single configured
lambda is used. Both modes write the iteration ledger, the catalog of
chosen elements and the run summary.
"""

import os
import time

import numpy as np

import config
from Scripts.utils.config_utils import RunConfig, apply_quadrature, dump_run_config
from Scripts.utils.export_utils import (
    write_elements_catalog,
    write_ledger,
    write_summary,
)
from Scripts.utils.geometry_utils import PolyIndex
from Scripts.utils.ray_utils import load_rays, synthetic_chords
from Scripts.utils.scenario_utils import (
    PlumeSpec,
    build_eval_grid,
    grid_values,
    perturb,
    plume_field,
    rrmse,
    save_grid_csv,
    slowness_to_dc_over_c,
    synthesize_delays,
)
from Scripts.utils.solver_utils import (
    SolverConfig,
    assemble_dictionary,
    build_starting_dictionary,
    chi2_red,
    learned_fehf_share,
    relative_data_error,
    run_lrfmp,
    select_model,
    tikhonov_functional,
)


def plume_spec(cfg: RunConfig) -> PlumeSpec:
    """Ground truth of the configured scenario."""
    scn = cfg.scenario
    return PlumeSpec(
        centers=tuple(tuple(c) for c in scn.plume_centers),
        base_radius=scn.base_radius,
        top_radius=scn.top_radius,
        amplitude=scn.amplitude,
    )


def _layer_errors(truth: np.ndarray, approximation: np.ndarray) -> list[float]:
    """Root mean square absolute error per layer."""
    squared = (truth - approximation) ** 2
    return [float(v) for v in np.sqrt(np.mean(squared, axis=(1, 2)))]


def run_inversion(cfg: RunConfig, progress: bool = True) -> dict:
    """
    Execute one experiment and write its artifacts under the output
    directory.

    Args:
        cfg (RunConfig): Validated configuration.
        progress (bool): Show tqdm bars.

    Returns:
        dict: The summary as written to the summary file.
    """
    started = time.perf_counter()
    apply_quadrature(cfg)
    settings = SolverConfig.from_run_config(cfg)
    out = cfg.output
    os.makedirs(out.output_dir, exist_ok=True)
    with open(os.path.join(out.output_dir, "config.toml"), "w", encoding="utf-8") as f:
        f.write(dump_run_config(cfg))

    elements = build_starting_dictionary(cfg.dictionary)
    n_polys = sum(isinstance(d, PolyIndex) for d in elements)
    print(
        f"[INFO] Starting dictionary: {n_polys} polynomials, "
        f"{len(elements) - n_polys} hat functions"
    )

    scn = cfg.scenario
    grid = build_eval_grid(scn.grid_layers, scn.grid_n_lon, scn.grid_n_lat)
    truth = None
    if cfg.run.mode == "synthetic":
        spec = plume_spec(cfg)
        rays = synthetic_chords(scn.n_rays, cfg.run.seed, scn.depth_biased)
        print(f"[INFO] Synthesizing delays along {len(rays)} chords...")
        delays = synthesize_delays(spec, rays, settings.workers, settings.gk_tolerance)
        rays = rays.with_delays(perturb(delays, cfg.solver.noise_level, cfg.run.seed))
        truth = grid_values(lambda p: plume_field(spec, p), grid)
    else:
        rays = load_rays(cfg.run.ray_file)
        print(f"[INFO] Loaded {len(rays)} rays from {cfg.run.ray_file}")

    print("[INFO] Assembling operator columns and Gram matrix...")
    dictionary = assemble_dictionary(
        elements, rays, settings.workers, settings.gk_tolerance, progress=progress
    )

    scores = None
    if truth is not None:
        selection = select_model(
            rays, dictionary, settings, truth, grid, cfg.run.seed, progress
        )
        result, factor, lam = selection.result, selection.lambda_factor, selection.lam
        scores = selection.scores
        for score in scores:
            print(
                f"[INFO] lambda = {score['lambda_factor']:g} * ||y||: "
                f"RRMSE {score['rrmse']:.6f} after {score['iterations']} iterations"
            )
    else:
        factor = settings.lambda_factors[0]
        lam = factor * float(np.linalg.norm(rays.delays))
        result = run_lrfmp(rays, dictionary, lam, settings, cfg.run.seed, progress)

    state = result.state
    approximation = grid_values(result.expansion, grid)
    grid_dir = os.path.join(out.output_dir, out.directory_grids)
    save_grid_csv(approximation, grid, grid_dir, "approximation")
    c_ref = scn.reference_velocity
    if c_ref is not None:
        # grids hold slowness per unit ball length
        per_km = approximation / config.EARTH_RADIUS_KM
        save_grid_csv(
            slowness_to_dc_over_c(per_km, c_ref), grid, grid_dir, "approximation_dc_c"
        )

    summary = {
        "mode": cfg.run.mode,
        "seed": cfg.run.seed,
        "n_rays": len(rays),
        "lambda_factor": factor,
        "lambda": lam,
        "iterations": len(result.expansion),
        "stop_reason": result.stop_reason,
        "relative_data_error": relative_data_error(state),
        "chi2_red": chi2_red(state),
        "tikhonov": tikhonov_functional(state),
        "active_packages": state.active_packages,
        "n_packages": len(state.rays.packages),
        "n_polynomials": sum(
            isinstance(d, PolyIndex) for _, d in result.expansion.terms
        ),
        "n_fehf": len(result.expansion.fehf_terms()),
        "n_learned": sum(row["source"] == "learned" for row in result.ledger),
        "learned_fehf_share": learned_fehf_share(result.ledger),
    }
    if truth is not None:
        save_grid_csv(truth, grid, grid_dir, "truth")
        save_grid_csv(np.abs(truth - approximation), grid, grid_dir, "abs_error")
        if c_ref is not None:
            dc_truth = slowness_to_dc_over_c(truth / config.EARTH_RADIUS_KM, c_ref)
            save_grid_csv(dc_truth, grid, grid_dir, "truth_dc_c")
        summary["rrmse"] = rrmse(truth, approximation)
        summary["layer_radii"] = [float(r) for r in grid.radii]
        summary["layer_errors"] = _layer_errors(truth, approximation)
        summary["lambda_scores"] = scores

    write_ledger(result.ledger, os.path.join(out.output_dir, out.ledger_file))
    write_elements_catalog(
        result.expansion, os.path.join(out.output_dir, out.elements_file)
    )
    write_summary(summary, os.path.join(out.output_dir, out.summary_file))
    wall_time = time.perf_counter() - started
    write_summary(
        {"wall_time_seconds": wall_time}, os.path.join(out.output_dir, out.timing_file)
    )

    print(
        f"[INFO] Stopped after {summary['iterations']} iterations "
        f"({result.stop_reason}), "
        f"relative data error {summary['relative_data_error']:.6f}"
        + (f", RRMSE {summary['rrmse']:.6f}" if "rrmse" in summary else "")
    )
    print(
        f"\nInversion completed in {wall_time:.1f} s. "
        f"Results saved in {out.output_dir}."
    )
    return summary
