"""
This module implements the discretized ray perturbation operator: the
line integral of a field along each polyline ray, computed segment by
segment with adaptive Gauss-Kronrod quadrature. For hat functions the
segments are cut where they cross the faces and centre surfaces of the
tesseroid, and rays that cannot touch the tesseroid are skipped.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

import config
from Scripts.utils.basis_utils import element_eval, poly_values
from Scripts.utils.geometry_utils import (
    DictionaryElement,
    PolyIndex,
    TesseroidParams,
    cartesian_to_spherical,
    support_box,
)
from Scripts.utils.quadrature_utils import GKResult, adaptive_gk
from Scripts.utils.ray_utils import Ray, RaySet

# _________________________________________________________________________________________________


def line_integral(
    field,
    ray: Ray,
    breakpoints=None,
    tol: float = config.GK_TOLERANCE,
) -> GKResult:
    """
    Integrate a field along a ray: sum over segments of
    int_0^1 field(a + tau (b - a)) |b - a| dtau.

    Args:
        field (callable): Vectorized field on SphericalPoint; may return
            shape (n,) or (n, k) for k fields at once.
        ray (Ray): The ray.
        breakpoints (callable | None): (a, b) -> iterable of tau in (0, 1)
            where the field is not smooth along the segment.
        tol (float): Relative tolerance of each segment integral.

    Returns:
        GKResult: Summed value and error; converged only if every segment
        converged.
    """
    value = 0.0
    error = 0.0
    converged = True
    intervals = 0
    vertices = ray.vertices
    for a, b in zip(vertices[:-1], vertices[1:]):
        step = b - a
        length = float(np.linalg.norm(step))

        def integrand(tau, a=a, step=step, length=length):
            points = a[None, :] + tau[:, None] * step[None, :]
            values = field(cartesian_to_spherical(points))
            return length * np.asarray(values, dtype=float)

        cuts = breakpoints(a, b) if breakpoints is not None else ()
        result = adaptive_gk(integrand, 0.0, 1.0, tol=tol, breakpoints=cuts)
        value = value + np.asarray(result.value)
        error = error + np.asarray(result.error)
        converged = converged and result.converged
        intervals += result.intervals

    return GKResult(_as_scalar(value), _as_scalar(error), converged, intervals)


def _as_scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


# _________________________________________________________________________________________________


def _quadratic_roots(qa: float, qb: float, qc: float) -> list[float]:
    """Real roots of qa tau^2 + qb tau + qc = 0 (linear if qa vanishes)."""
    scale = max(abs(qa), abs(qb), abs(qc), 1e-300)
    if abs(qa) <= 1e-14 * scale:
        return [-qc / qb] if abs(qb) > 1e-14 * scale else []
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return []
    root = math.sqrt(disc)
    # stable pair, avoids cancellation in -qb + root
    q = -0.5 * (qb + math.copysign(root, qb))
    roots = [q / qa]
    if q != 0.0:
        roots.append(qc / q)
    return roots


def _radius_crossings(a: np.ndarray, step: np.ndarray, radius: float) -> list[float]:
    return _quadratic_roots(
        float(step @ step), 2.0 * float(a @ step), float(a @ a) - radius * radius
    )


def _cone_crossings(a: np.ndarray, step: np.ndarray, t: float) -> list[float]:
    """Crossings of the cone z = t |x|."""
    if t == 0.0:
        return [-a[2] / step[2]] if step[2] != 0.0 else []
    qa = step[2] ** 2 - t * t * float(step @ step)
    qb = 2.0 * (a[2] * step[2] - t * t * float(a @ step))
    qc = a[2] ** 2 - t * t * float(a @ a)
    return [
        tau
        for tau in _quadratic_roots(qa, qb, qc)
        if (a[2] + tau * step[2]) * t >= 0.0
    ]


def _meridian_crossings(a: np.ndarray, step: np.ndarray, phi: float) -> list[float]:
    """Crossings of the half-plane of longitude phi."""
    c, s = math.cos(phi), math.sin(phi)
    denominator = -s * step[0] + c * step[1]
    if denominator == 0.0:
        return []
    tau = (s * a[0] - c * a[1]) / denominator
    point = a + tau * step
    return [tau] if c * point[0] + s * point[1] > 0.0 else []


def element_breakpoints(
    d: DictionaryElement, a: np.ndarray, b: np.ndarray
) -> list[float]:
    """
    Parameters tau in (0, 1) where the segment a + tau (b - a) crosses a
    face or centre surface of a hat function (radii, cones of constant t,
    meridian half-planes). Polynomials are smooth and have none.

    Args:
        d (DictionaryElement): The element.
        a (np.ndarray): Segment start.
        b (np.ndarray): Segment end.

    Returns:
        list[float]: Sorted breakpoints.
    """
    if isinstance(d, PolyIndex):
        return []
    step = b - a
    (r_lo, r_hi), _, (t_lo, t_hi) = support_box(d)
    taus = []
    for radius in (r_lo, d.R, r_hi):
        taus.extend(_radius_crossings(a, step, radius))
    for t in (t_lo, d.T, t_hi):
        taus.extend(_cone_crossings(a, step, t))
    for phi in (d.Phi - d.dPhi, d.Phi, d.Phi + d.dPhi):
        taus.extend(_meridian_crossings(a, step, phi))
    return sorted({tau for tau in taus if 0.0 < tau < 1.0})


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class SegmentTable:
    """Flattened segments of a ray set, for vectorized prefiltering."""

    starts: np.ndarray
    ends: np.ndarray
    ray_ids: np.ndarray


def segment_table(rays: RaySet) -> SegmentTable:
    starts, ends, ids = [], [], []
    for index, ray in enumerate(rays.rays):
        starts.append(ray.vertices[:-1])
        ends.append(ray.vertices[1:])
        ids.append(np.full(len(ray.vertices) - 1, index))
    if not starts:
        empty = np.zeros((0, 3))
        return SegmentTable(empty, empty, np.zeros(0, dtype=int))
    return SegmentTable(
        np.concatenate(starts), np.concatenate(ends), np.concatenate(ids)
    )


def _angular_radius(tess: TesseroidParams) -> float:
    """
    Upper bound of the angle between the centre direction and any point of
    the tesseroid: meridian offset plus the longest parallel arc.
    """
    _, _, (t_lo, t_hi) = support_box(tess)
    theta_c = math.acos(tess.T)
    theta_far = max(abs(math.acos(t_lo) - theta_c), abs(math.acos(t_hi) - theta_c))
    sine_max = 1.0 if t_lo <= 0.0 <= t_hi else max(
        math.sqrt(1.0 - t_lo * t_lo), math.sqrt(1.0 - t_hi * t_hi)
    )
    return min(math.pi, theta_far + tess.dPhi * sine_max)


def may_intersect(tess: TesseroidParams, segments: SegmentTable) -> np.ndarray:
    """
    Conservative test per segment: False only if the segment provably
    misses the tesseroid (radial range or angular cone disjoint).
    """
    a, b = segments.starts, segments.ends
    if len(a) == 0:
        return np.zeros(0, dtype=bool)
    (r_lo, r_hi), _, _ = support_box(tess)
    step = b - a
    step2 = np.maximum(np.einsum("ij,ij->i", step, step), 1e-300)
    tau = np.clip(-np.einsum("ij,ij->i", a, step) / step2, 0.0, 1.0)
    r_min = np.linalg.norm(a + tau[:, None] * step, axis=1)
    r_max = np.maximum(np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1))
    radial = (r_max >= r_lo) & (r_min <= r_hi)

    sine = math.sqrt(1.0 - tess.T**2)
    center = np.array([sine * math.cos(tess.Phi), sine * math.sin(tess.Phi), tess.T])
    a_hat = a / np.maximum(np.linalg.norm(a, axis=1), 1e-300)[:, None]
    b_hat = b / np.maximum(np.linalg.norm(b, axis=1), 1e-300)[:, None]
    normal = np.cross(a_hat, b_hat)
    normal_len = np.linalg.norm(normal, axis=1)
    degenerate = normal_len < 1e-12
    normal = normal / np.maximum(normal_len, 1e-300)[:, None]

    c_n = normal @ center
    projected = center[None, :] - c_n[:, None] * normal
    within_arc = (np.einsum("ij,ij->i", np.cross(a_hat, projected), normal) >= 0.0) & (
        np.einsum("ij,ij->i", np.cross(projected, b_hat), normal) >= 0.0
    )
    to_plane = np.arcsin(np.clip(np.abs(c_n), 0.0, 1.0))
    to_ends = np.minimum(
        np.arccos(np.clip(a_hat @ center, -1.0, 1.0)),
        np.arccos(np.clip(b_hat @ center, -1.0, 1.0)),
    )
    angle = np.where(within_arc, to_plane, to_ends)
    angular = degenerate | (angle <= _angular_radius(tess) + 1e-9)
    return radial & angular


def candidate_rays(
    tess: TesseroidParams, rays: RaySet, indices: np.ndarray
) -> np.ndarray:
    """Subset of the given ray indices that may intersect the tesseroid."""
    subset = RaySet([rays.rays[i] for i in indices])
    segments = segment_table(subset)
    hits = may_intersect(tess, segments)
    keep = np.zeros(len(indices), dtype=bool)
    keep[np.unique(segments.ray_ids[hits])] = True
    return np.asarray(indices)[keep]


# _________________________________________________________________________________________________


def dspo_apply(
    d: DictionaryElement, ray: Ray, tol: float = config.GK_TOLERANCE
) -> GKResult:
    """
    Travel-time contribution of one dictionary element along one ray.

    Args:
        d (DictionaryElement): The element.
        ray (Ray): The ray.
        tol (float): Relative quadrature tolerance.

    Returns:
        GKResult: Line integral in seconds with the convergence flag.
    """
    return line_integral(
        lambda p: element_eval(d, p),
        ray,
        breakpoints=lambda a, b: element_breakpoints(d, a, b),
        tol=tol,
    )


def _active_indices(rays: RaySet, active) -> np.ndarray:
    if active is None:
        return np.arange(len(rays))
    if isinstance(active, tuple):
        return np.arange(*active)
    if isinstance(active, range):
        return np.arange(active.start, active.stop, active.step)
    return np.asarray(active, dtype=int)


def dspo_matrix_column(
    d: DictionaryElement,
    rays: RaySet,
    active=None,
    workers: int = config.THREADS,
    tol: float = config.GK_TOLERANCE,
    return_flags: bool = False,
):
    """
    Column (T d)_i of the operator over the active rays.

    Args:
        d (DictionaryElement): The element.
        rays (RaySet): All rays.
        active (tuple | range | array | None): Active ray indices, a
            (start, stop) pair, or None for every ray.
        workers (int): Thread count for the ray loop.
        tol (float): Relative quadrature tolerance.
        return_flags (bool): Also return the per-ray convergence flags.

    Returns:
        np.ndarray | tuple: The column, and optionally the flags.
    """
    indices = _active_indices(rays, active)
    column = np.zeros(len(indices))
    flags = np.ones(len(indices), dtype=bool)

    todo = indices
    if isinstance(d, TesseroidParams):
        todo = candidate_rays(d, rays, indices)
    position = {int(i): k for k, i in enumerate(indices)}

    def integrate(i):
        return int(i), dspo_apply(d, rays.rays[int(i)], tol)

    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(integrate, todo))
    else:
        results = [integrate(i) for i in todo]

    for i, result in results:
        column[position[i]] = result.value
        flags[position[i]] = result.converged
    return (column, flags) if return_flags else column


def poly_matrix(
    indices: list[PolyIndex],
    rays: RaySet,
    active=None,
    workers: int = config.THREADS,
    tol: float = config.GK_TOLERANCE,
) -> np.ndarray:
    """
    Operator columns of many polynomials at once, one vector-valued line
    integral per ray.

    Returns:
        np.ndarray: Array of shape (n_active, len(indices)).
    """
    ray_indices = _active_indices(rays, active)
    if not indices:
        return np.zeros((len(ray_indices), 0))

    def integrate(i):
        result = line_integral(
            lambda p: poly_values(indices, p), rays.rays[int(i)], tol=tol
        )
        return np.atleast_1d(result.value)

    if workers > 1 and len(ray_indices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(integrate, ray_indices))
    else:
        rows = [integrate(i) for i in ray_indices]
    return np.array(rows).reshape(len(ray_indices), len(indices))
