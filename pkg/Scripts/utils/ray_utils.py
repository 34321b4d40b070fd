"""
This module provides the ray representation of the forward problem:
polyline rays through the unit ball with one travel-time delay and its
uncertainty each, ray sets split into divide-and-conquer packages, the
line-oriented ray file format and a synthetic chord generator.

Ray file grammar (distances in km, times in s):

    radius_km <float>
    ray <delay_s> <sigma_s> <nvertices>
    <x> <y> <z>          (nvertices lines)

Rays are separated by blank lines; lines starting with '#' are comments.
A file without rays may omit the header.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

import config
from Scripts.utils.config_utils import make_rng

VERTEX_TOLERANCE = 1e-9


class RayFileError(ValueError):
    """Raised on a malformed ray file; carries the offending line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class RayInvariantError(ValueError):
    """Raised when a ray violates its invariants; carries the ray index."""

    def __init__(self, ray_index: int, message: str):
        super().__init__(f"ray {ray_index}: {message}")
        self.ray_index = ray_index


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class Ray:
    """
    A ray as a polyline in the unit ball.

    Attributes:
        vertices (np.ndarray): Array of shape (K, 3), K >= 2.
        delay (float): Travel-time delay in seconds.
        sigma (float): Uncertainty of the delay in seconds.
    """

    vertices: np.ndarray
    delay: float = 0.0
    sigma: float = 1.0

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)

    @property
    def arc_lengths(self) -> np.ndarray:
        """Cumulative arc length s_k at every vertex, starting at 0."""
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths)])

    @property
    def length(self) -> float:
        return float(np.sum(self.segment_lengths))


@dataclass
class RaySet:
    """
    Rays with their package boundaries.

    Attributes:
        rays (list[Ray]): All rays in a fixed order.
        packages (list[tuple[int, int]]): Half-open index ranges that
            partition the rays in order.
    """

    rays: list[Ray] = field(default_factory=list)
    packages: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.packages and self.rays:
            self.packages = [(0, len(self.rays))]

    def __len__(self) -> int:
        return len(self.rays)

    @property
    def delays(self) -> np.ndarray:
        return np.array([ray.delay for ray in self.rays], dtype=float)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([ray.sigma for ray in self.rays], dtype=float)

    def with_delays(self, delays: np.ndarray) -> "RaySet":
        """Copy with replaced delays, keeping geometry, sigma and packages."""
        rays = [
            Ray(ray.vertices, float(delay), ray.sigma)
            for ray, delay in zip(self.rays, delays)
        ]
        return RaySet(rays, list(self.packages))

    def with_packages(self, package_size: int) -> "RaySet":
        return RaySet(self.rays, make_packages(len(self.rays), package_size))


# _________________________________________________________________________________________________


def validate_ray(ray: Ray, index: int, ball_radius: float = config.BALL_RADIUS) -> None:
    """
    Check the ray invariants.

    Raises:
        RayInvariantError: On fewer than two vertices, a vertex outside the
        ball, or a repeated consecutive vertex.
    """
    vertices = np.asarray(ray.vertices)
    if vertices.ndim != 2 or vertices.shape[1] != 3 or len(vertices) < 2:
        raise RayInvariantError(index, "a ray needs at least two 3-D vertices")
    radii = np.linalg.norm(vertices, axis=1)
    if np.any(radii > ball_radius * (1.0 + VERTEX_TOLERANCE)):
        worst = int(np.argmax(radii))
        raise RayInvariantError(
            index, f"vertex {worst} at radius {radii[worst]:.6g} outside the ball"
        )
    if np.any(ray.segment_lengths <= 0.0):
        raise RayInvariantError(index, "arc length is not strictly increasing")
    if not ray.sigma > 0.0:
        raise RayInvariantError(index, f"sigma must be positive, got {ray.sigma}")


# _________________________________________________________________________________________________


def make_packages(n_rays: int, package_size: int) -> list[tuple[int, int]]:
    """
    Split n_rays into consecutive packages of package_size rays; the last
    package takes the remainder.
    """
    if package_size < 1:
        raise ValueError("package size must be positive")
    return [
        (start, min(start + package_size, n_rays))
        for start in range(0, n_rays, package_size)
    ]


# _________________________________________________________________________________________________


def load_rays(path: str, ball_radius: float = config.BALL_RADIUS) -> RaySet:
    """
    Read and validate a ray file; vertices are scaled from km onto the
    ball by the declared radius.

    Args:
        path (str): Path of the ray file.
        ball_radius (float): Radius of the model ball.

    Returns:
        RaySet: The rays in file order, one package.

    Raises:
        RayFileError: On a syntax error, with its line number.
        RayInvariantError: On a ray that violates the invariants.
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = [
            (number, line.split("#", 1)[0].split())
            for number, line in enumerate(f, start=1)
        ]
    tokens = [(number, words) for number, words in lines if words]
    if not tokens:
        return RaySet()

    number, words = tokens[0]
    if len(words) != 2 or words[0] != "radius_km":
        raise RayFileError(number, "expected header 'radius_km <float>'")
    radius_km = _parse_float(number, words[1])
    if radius_km <= 0.0:
        raise RayFileError(number, "radius_km must be positive")
    scale = ball_radius / radius_km

    rays = []
    position = 1
    while position < len(tokens):
        number, words = tokens[position]
        if len(words) != 4 or words[0] != "ray":
            raise RayFileError(number, "expected 'ray <delay_s> <sigma_s> <nvertices>'")
        delay = _parse_float(number, words[1])
        sigma = _parse_float(number, words[2])
        try:
            count = int(words[3])
        except ValueError:
            raise RayFileError(number, f"invalid vertex count {words[3]!r}") from None
        if count < 0:
            raise RayFileError(number, "vertex count must be non-negative")

        block = tokens[position + 1 : position + 1 + count]
        if len(block) < count:
            raise RayFileError(
                number, f"ray declares {count} vertices, file ends early"
            )
        vertices = []
        for v_number, v_words in block:
            if len(v_words) != 3:
                raise RayFileError(v_number, "expected 'x y z'")
            vertices.append([_parse_float(v_number, w) for w in v_words])

        ray = Ray(np.array(vertices, dtype=float).reshape(-1, 3) * scale, delay, sigma)
        validate_ray(ray, len(rays), ball_radius)
        rays.append(ray)
        position += 1 + count

    return RaySet(rays)


def _parse_float(line_number: int, word: str) -> float:
    try:
        value = float(word)
    except ValueError:
        raise RayFileError(line_number, f"invalid number {word!r}") from None
    if not math.isfinite(value):
        raise RayFileError(line_number, f"non-finite number {word!r}")
    return value


# _________________________________________________________________________________________________


def save_rays(
    rays: RaySet,
    path: str,
    radius_km: float = config.EARTH_RADIUS_KM,
    ball_radius: float = config.BALL_RADIUS,
) -> None:
    """
    Write rays in the ray file format, scaling vertices to km.

    Args:
        rays (RaySet): Rays to write.
        path (str): Output file; parent directories are created.
        radius_km (float): Physical radius written to the header.
        ball_radius (float): Radius of the model ball.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    scale = radius_km / ball_radius
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"radius_km {radius_km:.17g}\n")
        for ray in rays.rays:
            f.write(f"\nray {ray.delay:.17g} {ray.sigma:.17g} {len(ray.vertices)}\n")
            for x, y, z in ray.vertices * scale:
                f.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


# _________________________________________________________________________________________________


def _orthonormal_complement(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(a, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(a, u)


def synthetic_chords(
    n: int,
    seed: int,
    depth_biased: bool = config.DEPTH_BIASED_RAYS,
    ball_radius: float = config.BALL_RADIUS,
) -> RaySet:
    """
    Straight chords between pseudo-random surface points.

    The first endpoint is uniform on the sphere. With depth_biased the
    second endpoint lies at a uniform epicentral distance in [30, 100]
    degrees and a uniform azimuth, so chords bottom out in the mid-mantle;
    otherwise it is uniform on the sphere as well.

    Args:
        n (int): Number of chords.
        seed (int): Run seed; the chords sub-stream is derived from it.
        depth_biased (bool): Use the epicentral-distance sampling.
        ball_radius (float): Radius of the sphere the endpoints lie on.

    Returns:
        RaySet: n two-vertex rays with zero delay and unit sigma.
    """
    rng = make_rng(seed, "chords")
    rays = []
    while len(rays) < n:
        z = rng.uniform(-1.0, 1.0)
        lon = rng.uniform(0.0, 2.0 * math.pi)
        s = math.sqrt(1.0 - z * z)
        start = np.array([s * math.cos(lon), s * math.sin(lon), z])

        if depth_biased:
            distance = math.radians(rng.uniform(30.0, 100.0))
            azimuth = rng.uniform(0.0, 2.0 * math.pi)
            u, v = _orthonormal_complement(start)
            end = math.cos(distance) * start + math.sin(distance) * (
                math.cos(azimuth) * u + math.sin(azimuth) * v
            )
        else:
            z2 = rng.uniform(-1.0, 1.0)
            lon2 = rng.uniform(0.0, 2.0 * math.pi)
            s2 = math.sqrt(1.0 - z2 * z2)
            end = np.array([s2 * math.cos(lon2), s2 * math.sin(lon2), z2])

        end /= np.linalg.norm(end)
        if np.linalg.norm(end - start) < 1e-6:
            continue
        rays.append(Ray(ball_radius * np.stack([start, end])))
    return RaySet(rays)
