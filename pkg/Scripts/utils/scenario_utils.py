"""
This module builds the synthetic resolution test: cone-shaped plumes from
the core-mantle boundary to the surface as ground truth, their travel-time
delays along rays, Gaussian data noise, the layered longitude/latitude
evaluation grid, the relative root mean square error and the conversion
from slowness deviations to relative velocity anomalies. Grids are stored
as one CSV file per layer.
"""

import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

import config
from Scripts.utils.config_utils import make_rng
from Scripts.utils.dspo_utils import line_integral
from Scripts.utils.geometry_utils import SphericalPoint, spherical_to_cartesian
from Scripts.utils.ray_utils import RaySet


class ZeroTruthError(ArithmeticError):
    """Raised when the RRMSE is requested for a truth that vanishes on the grid."""


class SlownessConversionError(ArithmeticError):
    """Raised when deltaS + 1/c_ref vanishes, so no velocity exists."""


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class PlumeSpec:
    """
    Cone-shaped plumes. Each cone is centred on the radial axis through
    (lon, lat); its radius grows linearly from base_radius at r = rho to
    top_radius at r = 1 and its cross-section is a triangular profile.

    Attributes:
        centers (tuple): (lon, lat) pairs in degrees.
        base_radius (float): Cone radius at the core-mantle boundary.
        top_radius (float): Cone radius at the surface.
        amplitude (float): Slowness deviation on the axis (slow is positive).
        rho (float): Relative radius of the core-mantle boundary.
    """

    centers: tuple = tuple(tuple(c) for c in config.PLUME_CENTERS)
    base_radius: float = config.PLUME_BASE_RADIUS
    top_radius: float = config.PLUME_TOP_RADIUS
    amplitude: float = config.PLUME_AMPLITUDE
    rho: float = config.RHO

    def cone_radius(self, r):
        slope = (self.top_radius - self.base_radius) / (1.0 - self.rho)
        return self.base_radius + slope * (r - self.rho)


def plume_axis(lon_deg: float, lat_deg: float) -> np.ndarray:
    """Unit vector of a geographic direction."""
    return spherical_to_cartesian(
        SphericalPoint(1.0, math.radians(lon_deg), math.sin(math.radians(lat_deg)))
    )


def plume_field(spec: PlumeSpec, p: SphericalPoint) -> float | np.ndarray:
    """
    Slowness deviation of the plume model.

    At radius r the profile is amplitude * max(0, 1 - r gamma / radius(r)),
    where gamma is the angle to the plume axis; the field vanishes below
    the core-mantle boundary.

    Args:
        spec (PlumeSpec): The plumes.
        p (SphericalPoint): Evaluation point(s).

    Returns:
        float | np.ndarray: Sum over the plumes.
    """
    r = np.asarray(p.r, dtype=float)
    direction = spherical_to_cartesian(SphericalPoint(1.0, p.phi, p.t))
    direction = np.broadcast_to(direction, r.shape + (3,))
    radius = spec.cone_radius(r)

    total = np.zeros(r.shape)
    for lon, lat in spec.centers:
        gamma = np.arccos(np.clip(direction @ plume_axis(lon, lat), -1.0, 1.0))
        bump = np.clip(1.0 - r * gamma / radius, 0.0, None)
        total = total + spec.amplitude * bump
    total = np.where((r >= spec.rho) & (r <= config.BALL_RADIUS), total, 0.0)
    return float(total) if total.ndim == 0 else total


def plume_chord_integral(spec: PlumeSpec, gamma: float, r0: float, r1: float) -> float:
    """
    Closed-form integral of a single plume along the radial chord at fixed
    angle gamma from its axis, from radius r0 to r1 (rho <= r0 < r1 <= 1).

    With radius(r) = c + k r the integrand is 1 - r gamma / (c + k r) where
    positive, and int r / (c + k r) dr = r / k - c / k^2 ln(c + k r).
    """
    k = (spec.top_radius - spec.base_radius) / (1.0 - spec.rho)
    c = spec.base_radius - k * spec.rho
    lo, hi = max(r0, spec.rho), r1
    # support: r (gamma - k) <= c
    if gamma > k:
        hi = min(hi, c / (gamma - k))
    elif gamma < k:
        lo = max(lo, c / (gamma - k))
    elif c < 0.0:
        return 0.0
    if hi <= lo:
        return 0.0

    if k == 0.0:
        ratio = 0.5 * (hi * hi - lo * lo) / c
    else:

        def antiderivative(r):
            return r / k - c / (k * k) * math.log(c + k * r)

        ratio = antiderivative(hi) - antiderivative(lo)
    return spec.amplitude * ((hi - lo) - gamma * ratio)


# _________________________________________________________________________________________________


def synthesize_delays(
    spec: PlumeSpec,
    rays: RaySet,
    workers: int = config.THREADS,
    tol: float = config.GK_TOLERANCE,
) -> np.ndarray:
    """
    Unperturbed delays y_i = int plume_field ds along every ray.

    Args:
        spec (PlumeSpec): Ground truth.
        rays (RaySet): Rays.
        workers (int): Thread count.
        tol (float): Relative quadrature tolerance.

    Returns:
        np.ndarray: One delay per ray, in seconds.
    """

    def integrate(ray):
        return line_integral(lambda p: plume_field(spec, p), ray, tol=tol).value

    if workers > 1 and len(rays) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(integrate, rays.rays)), dtype=float)
    return np.array([integrate(ray) for ray in rays.rays], dtype=float)


def perturb(y: np.ndarray, level: float, seed: int) -> np.ndarray:
    """
    Multiplicative Gaussian noise y_i (1 + level * eps_i), eps_i standard
    normal from the noise sub-stream of the seed.
    """
    y = np.asarray(y, dtype=float)
    if level == 0.0:
        return y.copy()
    eps = make_rng(seed, "noise").standard_normal(y.shape)
    return y * (1.0 + level * eps)


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class EvalGrid:
    """
    Layered equi-angular grid.

    Attributes:
        radii (np.ndarray): Layer radii in [rho, 1].
        lon (np.ndarray): Longitudes in degrees, -180 .. 180 inclusive.
        lat (np.ndarray): Latitudes in degrees, -90 .. 90 inclusive.
    """

    radii: np.ndarray
    lon: np.ndarray
    lat: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self.radii), len(self.lat), len(self.lon))

    def points(self) -> SphericalPoint:
        r, lat, lon = np.meshgrid(self.radii, self.lat, self.lon, indexing="ij")
        phi = np.mod(np.radians(lon), 2.0 * math.pi)
        return SphericalPoint(r, phi, np.sin(np.radians(lat)))


def build_eval_grid(
    layers: int = config.GRID_LAYERS,
    n_lon: int = config.GRID_N_LON,
    n_lat: int = config.GRID_N_LAT,
    rho: float = config.RHO,
) -> EvalGrid:
    """Grid with `layers` radii evenly spaced from rho to the surface."""
    if layers > 1:
        radii = np.linspace(rho, config.BALL_RADIUS, layers)
    else:
        radii = np.array([rho])
    return EvalGrid(
        radii, np.linspace(-180.0, 180.0, n_lon), np.linspace(-90.0, 90.0, n_lat)
    )


def grid_values(field, grid: EvalGrid) -> np.ndarray:
    """Evaluate a vectorized field on the grid, shape (layers, n_lat, n_lon)."""
    return np.asarray(field(grid.points()), dtype=float).reshape(grid.shape)


def rrmse(truth: np.ndarray, approximation: np.ndarray) -> float:
    """
    Relative root mean square error (sum (f - f_N)^2 / sum f^2)^(1/2).

    Raises:
        ZeroTruthError: If the truth vanishes on every grid point.
    """
    truth = np.asarray(truth, dtype=float)
    denominator = float(np.sum(truth**2))
    if denominator == 0.0:
        raise ZeroTruthError("the truth vanishes on the evaluation grid")
    return math.sqrt(float(np.sum((truth - approximation) ** 2)) / denominator)


def slowness_to_dc_over_c(delta_s, c_ref):
    """
    Relative velocity anomaly dc/c = -deltaS / (deltaS + 1/c_ref).

    Raises:
        SlownessConversionError: Where deltaS + 1/c_ref vanishes.
    """
    delta_s = np.asarray(delta_s, dtype=float)
    denominator = delta_s + 1.0 / np.asarray(c_ref, dtype=float)
    if np.any(denominator == 0.0):
        raise SlownessConversionError("deltaS + 1/c_ref vanishes")
    result = -delta_s / denominator
    return float(result) if result.ndim == 0 else result


# _________________________________________________________________________________________________


def save_grid_csv(
    values: np.ndarray, grid: EvalGrid, directory: str, prefix: str
) -> list[str]:
    """
    Write one CSV per layer with columns lon, lat, value (degrees). The
    layer radius is part of the file name.

    Returns:
        list[str]: Paths of the written files.
    """
    os.makedirs(directory, exist_ok=True)
    lat, lon = np.meshgrid(grid.lat, grid.lon, indexing="ij")
    paths = []
    for k, radius in enumerate(grid.radii):
        path = os.path.join(directory, f"{prefix}_layer{k:02d}_r{radius:.12f}.csv")
        pd.DataFrame(
            {"lon": lon.ravel(), "lat": lat.ravel(), "value": values[k].ravel()}
        ).to_csv(path, index=False, float_format="%.17g")
        paths.append(path)
    return paths


_LAYER_FILE = re.compile(r"^(?P<prefix>.+)_layer(?P<k>\d+)_r(?P<radius>[0-9.]+)\.csv$")


def load_grid_csv(directory: str, prefix: str) -> tuple[np.ndarray, EvalGrid]:
    """Read the layer files written by save_grid_csv."""
    layers = []
    for name in os.listdir(directory):
        match = _LAYER_FILE.match(name)
        if match and match["prefix"] == prefix:
            layers.append((int(match["k"]), float(match["radius"]), name))
    if not layers:
        raise FileNotFoundError(f"no {prefix} layers in {directory}")
    layers.sort()

    values = []
    lon = lat = None
    for _, _, name in layers:
        df = pd.read_csv(os.path.join(directory, name), float_precision="round_trip")
        lon = np.unique(df["lon"].to_numpy())
        lat = np.unique(df["lat"].to_numpy())
        values.append(df["value"].to_numpy().reshape(len(lat), len(lon)))
    grid = EvalGrid(np.array([radius for _, radius, _ in layers]), lon, lat)
    return np.stack(values), grid
