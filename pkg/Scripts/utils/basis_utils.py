"""
This module evaluates the two trial-function families of the dictionary
and their Cartesian gradients:

- tesseroid-based finite element hat functions (FEHFs), trilinear in
  (r, phi, t) on the clipped tesseroid support;
- orthonormal ball polynomials G_{m,n,j}, products of a Jacobi
  polynomial in 2 (r/R)^2 - 1, the power (r/R)^n and a fully normalized
  real spherical harmonic.

All functions are vectorized over the fields of a SphericalPoint.
"""

import numpy as np

import config
from Scripts.utils.geometry_utils import (
    DictionaryElement,
    PolyIndex,
    SphericalPoint,
    TesseroidParams,
    local_frame,
    longitude_offset,
    spherical_to_cartesian,
    support_box,
)
from Scripts.utils.special_functions_utils import (
    assoc_legendre_table,
    jacobi_derivative_table,
    jacobi_table,
    legendre_normalization,
    legendre_over_sine_table,
    radial_normalization,
    sine_times_legendre_prime_table,
    trig,
)

# _________________________________________________________________________________________________


def _arrays(p: SphericalPoint) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, phi, t = np.broadcast_arrays(
        np.asarray(p.r, dtype=float),
        np.asarray(p.phi, dtype=float),
        np.asarray(p.t, dtype=float),
    )
    return r, phi, t


def _radial_unit(phi: np.ndarray, t: np.ndarray) -> np.ndarray:
    return spherical_to_cartesian(SphericalPoint(1.0, phi, t))


# _________________________________________________________________________________________________


def _fehf_factors(tess: TesseroidParams, r, phi, t):
    """Hat factors per dimension, the signed offsets and the open-support mask."""
    (r_lo, r_hi), _, (t_lo, t_hi) = support_box(tess)
    dr = r - tess.R
    dphi = longitude_offset(phi, tess.Phi)
    dt = t - tess.T

    h_r = 1.0 - np.abs(dr) / tess.dR
    h_phi = 1.0 - np.abs(dphi) / tess.dPhi
    h_t = 1.0 - np.abs(dt) / tess.dT

    inside = (
        (r > r_lo) & (r < r_hi) & (t > t_lo) & (t < t_hi) & (h_r > 0.0)
        & (h_phi > 0.0) & (h_t > 0.0)
    )
    return (h_r, h_phi, h_t), (dr, dphi, dt), inside


def fehf_eval(tess: TesseroidParams, p: SphericalPoint) -> float | np.ndarray:
    """
    Value of the finite element hat function of a tesseroid.

    The longitudinal distance is measured on the periodic branch closest
    to the centre, so supports crossing phi = 0 are handled transparently.

    Args:
        tess (TesseroidParams): Centre and half-widths.
        p (SphericalPoint): Evaluation point(s).

    Returns:
        float | np.ndarray: Values in [0, 1].
    """
    r, phi, t = _arrays(p)
    (h_r, h_phi, h_t), _, inside = _fehf_factors(tess, r, phi, t)
    values = np.where(inside, h_r * h_phi * h_t, 0.0)
    return float(values) if values.ndim == 0 else values


def fehf_gradient(tess: TesseroidParams, p: SphericalPoint) -> np.ndarray:
    """
    Cartesian gradient of the hat function.

    Inside the support the gradient is assembled in the local frame as
    eps_r df/dr + eps_phi df/dphi / (r sqrt(1-t^2))
    + eps_t sqrt(1-t^2) / r df/dt. On the kink set sgn(0) = 0 is used;
    outside the open support the gradient is zero.

    Args:
        tess (TesseroidParams): Centre and half-widths.
        p (SphericalPoint): Evaluation point(s).

    Returns:
        np.ndarray: Array of shape (..., 3).
    """
    r, phi, t = _arrays(p)
    (h_r, h_phi, h_t), (dr, dphi, dt), inside = _fehf_factors(tess, r, phi, t)

    d_r = -np.sign(dr) / tess.dR * h_phi * h_t
    d_phi = -np.sign(dphi) / tess.dPhi * h_r * h_t
    d_t = -np.sign(dt) / tess.dT * h_r * h_phi

    # the frame is only needed inside the support, where |t| < 1 and r > 0
    t_safe = np.where(inside, t, 0.0)
    r_safe = np.where(inside, r, 1.0)
    e_r, e_phi, e_t = local_frame(phi, t_safe)
    sine = np.sqrt(1.0 - t_safe * t_safe)

    gradient = (
        e_r * d_r[..., None]
        + e_phi * (d_phi / (r_safe * sine))[..., None]
        + e_t * (sine / r_safe * d_t)[..., None]
    )
    return np.where(inside[..., None], gradient, 0.0)


# _________________________________________________________________________________________________


def poly_eval(idx: PolyIndex, p: SphericalPoint) -> float | np.ndarray:
    """
    Value of the orthonormal ball polynomial G_{m,n,j}.

    Args:
        idx (PolyIndex): The index (m, n, j).
        p (SphericalPoint): Evaluation point(s).

    Returns:
        float | np.ndarray: p_{m,n} P_m^(0,n+1/2)(2(r/R)^2 - 1) (r/R)^n
        q_{n,j} P_{n,|j|}(t) Trig(j phi).
    """
    values = poly_values([idx], p)[..., 0]
    return float(values) if values.ndim == 0 else values


def poly_values(indices: list[PolyIndex], p: SphericalPoint) -> np.ndarray:
    """
    Values of many ball polynomials at once, sharing the recurrences.

    Args:
        indices (list[PolyIndex]): Polynomial indices.
        p (SphericalPoint): Evaluation point(s).

    Returns:
        np.ndarray: Array of shape (*p.shape, len(indices)).
    """
    r, phi, t = _arrays(p)
    x = r / config.BALL_RADIUS
    if not indices:
        return np.zeros(r.shape + (0,))
    m_max = max(i.m for i in indices)
    n_max = max(i.n for i in indices)

    legendre = assoc_legendre_table(n_max, t)
    jacobi_by_n = {
        n: jacobi_table(m_max, n + 0.5, 2.0 * x * x - 1.0)
        for n in {i.n for i in indices}
    }
    trig_by_j = {j: trig(j, phi) for j in {i.j for i in indices}}

    columns = []
    for i in indices:
        norm = radial_normalization(i.m, i.n) * legendre_normalization(i.n, i.j)
        columns.append(
            norm
            * jacobi_by_n[i.n][i.m]
            * x**i.n
            * legendre[i.n, abs(i.j)]
            * trig_by_j[i.j]
        )
    return np.stack(columns, axis=-1)


# _________________________________________________________________________________________________


def poly_gradient(idx: PolyIndex, p: SphericalPoint) -> np.ndarray:
    """
    Cartesian gradient of G_{m,n,j}.

    The radial term uses I'(r) = 4 r / R^2 and the derivative of (r/R)^n;
    the angular terms use P_{n,k}/sqrt(1-t^2) and sqrt(1-t^2) P_{n,k}',
    both finite at the poles. For n = 0 only the radial term survives and
    the gradient is defined at the poles as well.

    Args:
        idx (PolyIndex): The index (m, n, j).
        p (SphericalPoint): Evaluation point(s); |t| < 1 unless n = 0.

    Returns:
        np.ndarray: Array of shape (..., 3).
    """
    r, phi, t = _arrays(p)
    ball = config.BALL_RADIUS
    m, n, j = idx.m, idx.n, idx.j
    k = abs(j)
    x = r / ball
    norm = radial_normalization(m, n) * legendre_normalization(n, j)

    beta = n + 0.5
    jac = jacobi_table(m, beta, 2.0 * x * x - 1.0)[m]
    jac_prime = jacobi_derivative_table(m, beta, 2.0 * x * x - 1.0)[m]
    power = x**n
    power_prime = n * x ** (n - 1) / ball if n > 0 else np.zeros_like(x)
    radial_prime = jac_prime * (4.0 * r / ball**2) * power + jac * power_prime

    legendre = assoc_legendre_table(n, t)[n, k]
    trig_j = trig(j, phi)
    radial_part = norm * radial_prime * legendre * trig_j
    gradient = _radial_unit(phi, t) * radial_part[..., None]
    if n == 0:
        return gradient

    # A(r) / r with A = P_m (r/R)^n, regular at r = 0 for n >= 1
    radial_over_r = jac * x ** (n - 1) / ball
    _, e_phi, e_t = local_frame(phi, t)
    slope = sine_times_legendre_prime_table(n, t)[n, k]
    gradient = gradient + e_t * (norm * radial_over_r * slope * trig_j)[..., None]
    if j != 0:
        quotient = legendre_over_sine_table(n, t)[n, k]
        gradient = gradient + e_phi * (
            norm * radial_over_r * quotient * j * trig(-j, phi)
        )[..., None]
    return gradient


# _________________________________________________________________________________________________


def element_eval(d: DictionaryElement, p: SphericalPoint) -> float | np.ndarray:
    """Value of a dictionary element of either family."""
    if isinstance(d, PolyIndex):
        return poly_eval(d, p)
    return fehf_eval(d, p)


def element_gradient(d: DictionaryElement, p: SphericalPoint) -> np.ndarray:
    """Cartesian gradient of a dictionary element of either family."""
    if isinstance(d, PolyIndex):
        return poly_gradient(d, p)
    return fehf_gradient(d, p)


def expansion_eval(expansion, p: SphericalPoint) -> float | np.ndarray:
    """
    Evaluate f_N = f_0 + sum alpha_n d_n.

    Args:
        expansion: Object with `terms` (list of (alpha, element)) and
            `f0` (callable on SphericalPoint, or None for the zero field).
        p (SphericalPoint): Evaluation point(s).

    Returns:
        float | np.ndarray: The expansion at p.
    """
    r, phi, t = _arrays(p)
    points = SphericalPoint(r, phi, t)
    total = np.zeros(r.shape) if expansion.f0 is None else np.asarray(
        expansion.f0(points), dtype=float
    )

    polys = [(alpha, d) for alpha, d in expansion.terms if isinstance(d, PolyIndex)]
    if polys:
        values = poly_values([d for _, d in polys], points)
        total = total + values @ np.array([alpha for alpha, _ in polys])
    for alpha, d in expansion.terms:
        if isinstance(d, TesseroidParams):
            total = total + alpha * fehf_eval(d, points)
    return float(total) if np.ndim(total) == 0 else total
