"""
Geometry and parameter types shared by the whole inversion: spherical
points in (r, phi, t) coordinates, the local orthonormal frame, tesseroid
parameters with their natural constraints, polynomial indices and the
dictionary element union built from both.
"""

import math
from dataclasses import dataclass, field

import numpy as np

import config

TWO_PI = 2.0 * math.pi


class DegenerateFrameError(ArithmeticError):
    """Raised when the local frame is requested at one of the poles t = +-1."""


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class SphericalPoint:
    """
    A point (or an array of points) of the ball in polar coordinates.

    The fields may be scalars or numpy arrays of a common shape; every
    function of the package that takes a SphericalPoint is vectorized.

    Attributes:
        r (float | np.ndarray): Radius in [0, BALL_RADIUS].
        phi (float | np.ndarray): Longitude in [0, 2pi).
        t (float | np.ndarray): Cosine of the polar distance in [-1, 1].
    """

    r: float | np.ndarray
    phi: float | np.ndarray
    t: float | np.ndarray


# _________________________________________________________________________________________________


def normalize_longitude(phi: float | np.ndarray) -> float | np.ndarray:
    """
    Map a longitude into [0, 2pi).

    Args:
        phi (float | np.ndarray): Longitude in radians, any real value.

    Returns:
        float | np.ndarray: The equivalent longitude in [0, 2pi).
    """
    wrapped = np.mod(phi, TWO_PI)
    # np.mod can round up to exactly 2pi for tiny negative inputs
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


# _________________________________________________________________________________________________


def longitude_offset(phi: float | np.ndarray, center: float) -> float | np.ndarray:
    """
    Signed longitudinal distance phi - center taken on the periodic branch
    closest to the centre, i.e. the result lies in [-pi, pi).
    """
    return np.mod(np.asarray(phi) - center + math.pi, TWO_PI) - math.pi


# _________________________________________________________________________________________________


def spherical_to_cartesian(p: SphericalPoint) -> np.ndarray:
    """
    Convert polar coordinates to Cartesian coordinates.

    Args:
        p (SphericalPoint): Point(s) in (r, phi, t).

    Returns:
        np.ndarray: Array of shape (..., 3) holding r * xi(phi, t).
    """
    r = np.asarray(p.r, dtype=float)
    phi = np.asarray(p.phi, dtype=float)
    t = np.asarray(p.t, dtype=float)
    sine = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    return np.stack(
        [r * sine * np.cos(phi), r * sine * np.sin(phi), r * t], axis=-1
    )


# _________________________________________________________________________________________________


def cartesian_to_spherical(x: np.ndarray) -> SphericalPoint:
    """
    Convert Cartesian coordinates to polar coordinates.

    The origin is mapped to (r, phi, t) = (0, 0, 1) by convention.

    Args:
        x (np.ndarray): Array of shape (..., 3).

    Returns:
        SphericalPoint: Point(s) with phi normalized into [0, 2pi).
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    safe_r = np.where(r > 0.0, r, 1.0)
    t = np.where(r > 0.0, np.clip(x[..., 2] / safe_r, -1.0, 1.0), 1.0)
    phi = normalize_longitude(np.arctan2(x[..., 1], x[..., 0]))
    if np.ndim(r) == 0:
        return SphericalPoint(float(r), float(phi), float(t))
    return SphericalPoint(r, np.asarray(phi), t)


# _________________________________________________________________________________________________


def local_frame(
    phi: float | np.ndarray, t: float | np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Local orthonormal basis (eps_r, eps_phi, eps_t) at the given angles.

    Args:
        phi (float | np.ndarray): Longitude(s).
        t (float | np.ndarray): Polar distance cosine(s) in (-1, 1).

    Returns:
        tuple: Three arrays of shape (..., 3).

    Raises:
        DegenerateFrameError: If any |t| >= 1, where eps_phi and eps_t
        are undefined.
    """
    phi = np.asarray(phi, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) >= 1.0):
        raise DegenerateFrameError("local frame is undefined at t = +-1")

    sine = np.sqrt(1.0 - t * t)
    cos_phi = np.cos(phi)
    sin_phi = np.sin(phi)
    zeros = np.zeros_like(phi * t)
    e_r = np.stack([sine * cos_phi, sine * sin_phi, t + zeros], axis=-1)
    e_phi = np.stack([-sin_phi + zeros, cos_phi + zeros, zeros], axis=-1)
    e_t = np.stack([-t * cos_phi, -t * sin_phi, sine + zeros], axis=-1)
    return e_r, e_phi, e_t


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class TesseroidBounds:
    """
    The natural constraints of a tesseroid. All lengths are relative to
    the ball radius.
    """

    rho: float = config.RHO
    ball_radius: float = config.BALL_RADIUS
    eps_r: float = config.EPS_R
    eps_phi: float = config.EPS_PHI
    eps_t: float = config.EPS_T

    @property
    def r_min(self) -> float:
        return self.rho * self.ball_radius

    @property
    def r_max(self) -> float:
        return self.ball_radius

    @property
    def t_min(self) -> float:
        return -1.0 + self.eps_t

    @property
    def t_max(self) -> float:
        return 1.0 - self.eps_t


DEFAULT_BOUNDS = TesseroidBounds()


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class TesseroidParams:
    """
    Centre (R, Phi, T) and half-widths (dR, dPhi, dT) of a tesseroid-based
    finite element hat function. Phi is stored normalized into [0, 2pi).
    """

    R: float
    Phi: float
    T: float
    dR: float
    dPhi: float
    dT: float
    bounds: TesseroidBounds = field(default=DEFAULT_BOUNDS, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "Phi", normalize_longitude(float(self.Phi)))

    @property
    def center(self) -> tuple[float, float, float]:
        return (self.R, self.Phi, self.T)

    @property
    def half_widths(self) -> tuple[float, float, float]:
        return (self.dR, self.dPhi, self.dT)

    def as_tuple(self) -> tuple[float, ...]:
        return (self.R, self.Phi, self.T, self.dR, self.dPhi, self.dT)


# _________________________________________________________________________________________________


def longitude_branch(tess: TesseroidParams) -> float:
    """
    Lower end P of the longitudinal branch [P, P + 2pi] that holds the
    whole longitudinal support of the tesseroid.
    """
    return math.floor((tess.Phi - tess.dPhi) / math.pi) * math.pi


# _________________________________________________________________________________________________


def support_box(
    tess: TesseroidParams,
) -> tuple[tuple[float, float], tuple[float, float], tuple[float, float]]:
    """
    The clipped support E of the hat function.

    Args:
        tess (TesseroidParams): The tesseroid.

    Returns:
        tuple: ((r_lo, r_hi), (phi_lo, phi_hi), (t_lo, t_hi)); the
        longitudinal interval is not wrapped and may leave [0, 2pi).
    """
    b = tess.bounds
    return (
        (max(b.r_min, tess.R - tess.dR), min(b.r_max, tess.R + tess.dR)),
        (tess.Phi - tess.dPhi, tess.Phi + tess.dPhi),
        (max(b.t_min, tess.T - tess.dT), min(b.t_max, tess.T + tess.dT)),
    )


# _________________________________________________________________________________________________


def validate_tesseroid(tess: TesseroidParams) -> list[str]:
    """
    List every violated tesseroid constraint.

    Args:
        tess (TesseroidParams): The tesseroid to check.

    Returns:
        list[str]: Human-readable violated bounds; empty if the tesseroid
        is valid.
    """
    b = tess.bounds
    violations = []
    checks = [
        (tess.R >= b.r_min, "R ≥ ρ𝐑"),
        (tess.R <= b.r_max, "R ≤ 𝐑"),
        (tess.dR >= b.eps_r, "ΔR ≥ ε_R"),
        (tess.dR <= b.ball_radius / 2.0, "ΔR ≤ 𝐑/2"),
        (0.0 <= tess.Phi <= TWO_PI, "Φ ∈ [0, 2π]"),
        (tess.dPhi >= b.eps_phi, "ΔΦ ≥ ε_Φ"),
        (tess.dPhi <= math.pi, "ΔΦ ≤ π"),
        (tess.T >= b.t_min, "T ≥ −1+ε_T"),
        (tess.T <= b.t_max, "T ≤ 1−ε_T"),
        (tess.dT >= b.eps_t, "ΔT ≥ ε_T"),
        (tess.dT <= 0.5, "ΔT ≤ 0.5"),
    ]
    for ok, message in checks:
        if not ok:
            violations.append(message)

    for name, (lo, hi) in zip(("r", "φ", "t"), support_box(tess)):
        if not lo < hi:
            violations.append(f"support degenerate in {name}")
    return violations


# _________________________________________________________________________________________________


@dataclass(frozen=True, order=True)
class PolyIndex:
    """Index (m, n, j) of an orthonormal ball polynomial."""

    m: int
    n: int
    j: int

    def __post_init__(self):
        if self.m < 0 or self.n < 0 or abs(self.j) > self.n:
            raise ValueError(f"invalid polynomial index {self}")


DictionaryElement = PolyIndex | TesseroidParams


# _________________________________________________________________________________________________


def element_sort_key(element: DictionaryElement) -> tuple:
    """
    Canonical order of dictionary elements: polynomials first by (m, n, j),
    then hat functions by their parameter tuple.
    """
    if isinstance(element, PolyIndex):
        return (0, element.m, element.n, element.j)
    return (1, *element.as_tuple())


# _________________________________________________________________________________________________


def element_to_dict(element: DictionaryElement) -> dict:
    """
    Encode a dictionary element as a JSON-ready dict.

    Args:
        element (DictionaryElement): A polynomial index or a tesseroid.

    Returns:
        dict: {"type": "polynomial", m, n, j} or {"type": "fehf", R, ...}.
    """
    if isinstance(element, PolyIndex):
        return {"type": "polynomial", "m": element.m, "n": element.n, "j": element.j}
    return {
        "type": "fehf",
        "R": element.R,
        "Phi": element.Phi,
        "T": element.T,
        "dR": element.dR,
        "dPhi": element.dPhi,
        "dT": element.dT,
    }


# _________________________________________________________________________________________________


def element_from_dict(
    data: dict, bounds: TesseroidBounds = DEFAULT_BOUNDS
) -> DictionaryElement:
    """Inverse of element_to_dict."""
    if data["type"] == "polynomial":
        return PolyIndex(int(data["m"]), int(data["n"]), int(data["j"]))
    if data["type"] == "fehf":
        return TesseroidParams(
            float(data["R"]),
            float(data["Phi"]),
            float(data["T"]),
            float(data["dR"]),
            float(data["dPhi"]),
            float(data["dT"]),
            bounds,
        )
    raise ValueError(f"unknown element type {data['type']!r}")
