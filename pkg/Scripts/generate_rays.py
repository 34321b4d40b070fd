"""
Stage that writes a synthetic ray file: straight chords between surface
points with delays synthesized from the default plume scenario, so the
file can drive a rayfile-mode inversion directly.
"""

import config
from Scripts.utils.ray_utils import save_rays, synthetic_chords
from Scripts.utils.scenario_utils import PlumeSpec, synthesize_delays


def generate_rays(
    n: int,
    seed: int,
    out: str,
    depth_biased: bool = config.DEPTH_BIASED_RAYS,
    workers: int = config.THREADS,
) -> int:
    """
    Generate n chords and save them in the ray file format.

    Args:
        n (int): Number of chords.
        seed (int): Run seed (chords sub-stream).
        out (str): Output ray file.
        depth_biased (bool): Sample epicentral distances in [30, 100] degrees.
        workers (int): Thread count for the delay synthesis.

    Returns:
        int: Number of rays written.
    """
    rays = synthetic_chords(n, seed, depth_biased)
    delays = synthesize_delays(PlumeSpec(), rays, workers)
    save_rays(rays.with_delays(delays), out)
    print(f"[INFO] Wrote {len(rays)} rays to {out}")
    return len(rays)
