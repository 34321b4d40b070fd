"""
This module computes H1(B) inner products <d, d'> = <d, d'>_L2 + <grad d, grad d'>
between dictionary elements, for the three pairings:

- polynomial x polynomial: Kronecker structure plus three radial integrals
  in u = 2 (r/R)^2 - 1, integrated adaptively;
- hat x hat: every integral factorizes into one-dimensional integrals of
  piecewise polynomials, integrated exactly segment by segment between the
  critical points of the overlap (the 1/(1-t^2) weight via log/atanh);
- hat x polynomial: numeric radial integrals with a breakpoint at the hat
  centre, analytic longitudinal integrals and Gauss-Legendre latitudinal
  integrals.

It also holds the thread-safe GramCache used by the solver.
"""

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

import config
from Scripts.utils.basis_utils import element_eval, element_gradient
from Scripts.utils.geometry_utils import (
    TWO_PI,
    DictionaryElement,
    PolyIndex,
    SphericalPoint,
    TesseroidParams,
    element_sort_key,
    support_box,
)
from Scripts.utils.quadrature_utils import BallRule, adaptive_gk, gauss_legendre
from Scripts.utils.special_functions_utils import (
    assoc_legendre_table,
    jacobi_derivative_table,
    jacobi_table,
    legendre_normalization,
    radial_normalization,
    sine_times_legendre_prime_table,
    trig_antiderivatives,
)


class PoleProximityError(ArithmeticError):
    """Raised when a latitudinal integration bound is within delta_pole of t = +-1."""


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class OverlapInterval:
    """
    Overlap of two one-dimensional hat supports.

    Attributes:
        lb (float): Lower bound of the overlap.
        ub (float): Upper bound of the overlap.
        critical_points (tuple[float, ...]): lb, ub and the hat centres in
            between, ascending. The hats are linear between neighbours.
        shift (float): Multiple of 2pi added to the second centre
            (longitude only).
    """

    lb: float
    ub: float
    critical_points: tuple[float, ...]
    shift: float = 0.0

    @property
    def empty(self) -> bool:
        return self.lb >= self.ub


def overlap_interval(
    x: float,
    dx: float,
    x2: float,
    dx2: float,
    lower: float = -math.inf,
    upper: float = math.inf,
    shift: float = 0.0,
) -> OverlapInterval:
    """
    Overlap of [x - dx, x + dx] and [x2 - dx2, x2 + dx2] clipped to
    [lower, upper], with the critical points of the product of both hats.
    """
    lb = max(lower, x - dx, x2 - dx2)
    ub = min(upper, x + dx, x2 + dx2)
    if lb >= ub:
        return OverlapInterval(lb, ub, (), shift)
    inner = {c for c in (x, x2) if lb < c < ub}
    return OverlapInterval(lb, ub, tuple(sorted({lb, ub} | inner)), shift)


def overlap_bounds(
    tess: TesseroidParams, other: TesseroidParams
) -> tuple[list[OverlapInterval], list[OverlapInterval], list[OverlapInterval]]:
    """
    Per-dimension overlaps of two tesseroid supports.

    The radial and latitudinal supports are clipped to the tesseroid bounds
    and give at most one interval each. The longitudinal supports are
    periodic: the second centre is shifted by -2pi, 0 and 2pi, which covers
    every wrap case and may give two intervals.

    Args:
        tess (TesseroidParams): First tesseroid.
        other (TesseroidParams): Second tesseroid.

    Returns:
        tuple: Lists of non-empty OverlapIntervals for (r, phi, t).
    """
    b = tess.bounds
    r = overlap_interval(tess.R, tess.dR, other.R, other.dR, b.r_min, b.r_max)
    t = overlap_interval(tess.T, tess.dT, other.T, other.dT, b.t_min, b.t_max)
    phi = [
        overlap_interval(
            tess.Phi, tess.dPhi, other.Phi + k * TWO_PI, other.dPhi, shift=k * TWO_PI
        )
        for k in (-1, 0, 1)
    ]
    return (
        [r] if not r.empty else [],
        [p for p in phi if not p.empty],
        [t] if not t.empty else [],
    )


# _________________________________________________________________________________________________


def _hat_piece(
    center: float, width: float, sign: float, derivative: bool
) -> Polynomial:
    """Hat (or its derivative) on a segment where sgn(x - center) = sign."""
    if derivative:
        return Polynomial([-sign / width])
    return Polynomial([1.0 + sign * center / width, -sign / width])


_ONE_MINUS_T2 = Polynomial([1.0, 0.0, -1.0])


def _integrate_inverse_sine2(poly: Polynomial, lo: float, hi: float) -> float:
    """Exact int_lo^hi poly(t) / (1 - t^2) dt for |lo|, |hi| < 1."""
    quotient, remainder = divmod(poly, _ONE_MINUS_T2)
    coef = np.concatenate([remainder.coef, [0.0, 0.0]])
    b, a = coef[0], coef[1]

    def antiderivative(t):
        return -0.5 * a * math.log1p(-t * t) + b * math.atanh(t)

    integral = quotient.integ()
    return float(integral(hi) - integral(lo) + antiderivative(hi) - antiderivative(lo))


def w_integral(
    overlap: OverlapInterval,
    hat: tuple[float, float],
    other_hat: tuple[float, float],
    weight: str = "1",
    derivative: bool = False,
) -> float:
    """
    Integral of the product of two hats (or of their derivatives) against
    a weight over an overlap, exact segment by segment.

    Args:
        overlap (OverlapInterval): The overlap with its critical points.
        hat (tuple): (centre, half-width) of the first hat.
        other_hat (tuple): (centre, half-width) of the second hat, already
            shifted by overlap.shift.
        weight (str): One of "1", "r2", "1-t2", "1/(1-t2)".
        derivative (bool): Integrate h' h'' instead of h h'.

    Returns:
        float: The integral; 0 for an empty overlap.
    """
    total = 0.0
    points = overlap.critical_points
    for lo, hi in zip(points[:-1], points[1:]):
        mid = 0.5 * (lo + hi)
        s1 = float(np.sign(mid - hat[0]))
        s2 = float(np.sign(mid - other_hat[0]))
        product = _hat_piece(*hat, s1, derivative) * _hat_piece(
            *other_hat, s2, derivative
        )
        if weight == "r2":
            product = product * Polynomial([0.0, 0.0, 1.0])
        elif weight == "1-t2":
            product = product * _ONE_MINUS_T2
        elif weight == "1/(1-t2)":
            total += _integrate_inverse_sine2(product, lo, hi)
            continue
        elif weight != "1":
            raise ValueError(f"unknown weight {weight!r}")
        integral = product.integ()
        total += float(integral(hi) - integral(lo))
    return total


# _________________________________________________________________________________________________


def _check_pole_distance(lo: float, hi: float) -> None:
    if 1.0 - max(abs(lo), abs(hi)) <= config.DELTA_POLE:
        raise PoleProximityError(
            f"latitudinal bound within {config.DELTA_POLE} of a pole: [{lo}, {hi}]"
        )


def h1_fehf_fehf(tess: TesseroidParams, other: TesseroidParams) -> float:
    """
    H1 inner product of two hat functions.

    With dV = r^2 dr dphi dt the integrand factorizes per dimension:
    L2 = W_r(r^2) W_phi W_t, and the gradient adds
    W_r'(r^2) W_phi W_t + W_r W_phi' W_t(1/(1-t^2)) + W_r W_phi W_t'(1-t^2).

    Raises:
        PoleProximityError: If the latitudinal overlap reaches the poles.
    """
    r_parts, phi_parts, t_parts = overlap_bounds(tess, other)
    if not (r_parts and phi_parts and t_parts):
        return 0.0
    r_ov, t_ov = r_parts[0], t_parts[0]
    _check_pole_distance(t_ov.lb, t_ov.ub)

    r_hats = ((tess.R, tess.dR), (other.R, other.dR))
    t_hats = ((tess.T, tess.dT), (other.T, other.dT))
    r_hh_r2 = w_integral(r_ov, *r_hats, weight="r2")
    r_dd_r2 = w_integral(r_ov, *r_hats, weight="r2", derivative=True)
    r_hh = w_integral(r_ov, *r_hats)

    phi_hh = 0.0
    phi_dd = 0.0
    for part in phi_parts:
        hats = ((tess.Phi, tess.dPhi), (other.Phi + part.shift, other.dPhi))
        phi_hh += w_integral(part, *hats)
        phi_dd += w_integral(part, *hats, derivative=True)

    t_hh = w_integral(t_ov, *t_hats)
    t_hh_inv = w_integral(t_ov, *t_hats, weight="1/(1-t2)")
    t_dd = w_integral(t_ov, *t_hats, weight="1-t2", derivative=True)

    return (
        r_hh_r2 * phi_hh * t_hh
        + r_dd_r2 * phi_hh * t_hh
        + r_hh * phi_dd * t_hh_inv
        + r_hh * phi_hh * t_dd
    )


# _________________________________________________________________________________________________


@lru_cache(maxsize=4096)
def _radial_poly_integrals(m: int, m2: int, n: int, tol: float) -> float:
    """
    Gradient part of <G_{m,n,j}, G_{m2,n,j}> without the normalizations
    and the factor R: the three u-integrals weighted by (1+u)^(n+3/2),
    (1+u)^(n+1/2) and (1+u)^(n-1/2). The tolerance is part of the cache key.
    """
    beta = n + 0.5

    def integrand(u):
        jac = jacobi_table(max(m, m2), beta, u)
        jac_prime = jacobi_derivative_table(max(m, m2), beta, u)
        a, a2 = jac[m], jac[m2]
        da, da2 = jac_prime[m], jac_prime[m2]
        one_plus = 1.0 + u
        columns = [da * da2 * one_plus ** (n + 1.5)]
        if n > 0:
            columns.append((da * a2 + a * da2) * one_plus ** (n + 0.5))
            columns.append(a * a2 * one_plus ** (n - 0.5))
        return np.stack(columns, axis=-1)

    result = adaptive_gk(integrand, -1.0, 1.0, tol=tol)
    values = np.atleast_1d(result.value)
    total = math.sqrt(2.0) / 2**n * values[0]
    if n > 0:
        total += n / (2**n * math.sqrt(2.0)) * values[1]
        total += n * (2 * n + 1) / (2 ** (n + 1) * math.sqrt(2.0)) * values[2]
    return float(total)


def h1_poly_poly(idx: PolyIndex, other: PolyIndex) -> float:
    """
    H1 inner product of two ball polynomials: the L2 part is the Kronecker
    delta (orthonormality), the gradient part vanishes unless n and j agree.
    """
    if idx.n != other.n or idx.j != other.j:
        return 0.0
    l2 = 1.0 if idx.m == other.m else 0.0
    m, m2 = sorted((idx.m, other.m))
    # the substitution r = R sqrt((1+u)/2) leaves one factor R
    gradient = (
        radial_normalization(idx.m, idx.n)
        * radial_normalization(other.m, other.n)
        * config.BALL_RADIUS
        * _radial_poly_integrals(m, m2, idx.n, config.GRAM_GK_TOLERANCE)
    )
    return l2 + gradient


# _________________________________________________________________________________________________


def _longitude_factors(tess: TesseroidParams, orders: list[int]) -> dict:
    """
    Analytic int hat(phi) Trig(j phi) dphi and int hat'(phi) Trig'(j phi) dphi
    over the unwrapped support [Phi - dPhi, Phi + dPhi].
    """
    center, width = tess.Phi, tess.dPhi
    factors = {}
    for j in orders:
        i1_l, i2_l = trig_antiderivatives(j, center - width)
        i1_c, i2_c = trig_antiderivatives(j, center)
        i1_u, i2_u = trig_antiderivatives(j, center + width)
        left = i1_c - i1_l + (width - center) * (i2_c - i2_l)
        right = (center + width) * (i2_u - i2_c) - (i1_u - i1_c)
        value = float(left + right) / width

        slope = 0.0
        if j != 0:
            _, k2_l = trig_antiderivatives(-j, center - width)
            _, k2_c = trig_antiderivatives(-j, center)
            _, k2_u = trig_antiderivatives(-j, center + width)
            slope = float(j / width * (2.0 * k2_c - k2_l - k2_u))
        factors[j] = (value, slope)
    return factors


def _radial_factors(tess: TesseroidParams, pairs: list[tuple[int, int]]) -> np.ndarray:
    """
    Numeric radial integrals for every (m, n): columns are
    int r^2 A h dr, int r^2 A' h' dr and int A h dr, with
    A(r) = P_m^(0,n+1/2)(2(r/R)^2 - 1) (r/R)^n.
    """
    ball = config.BALL_RADIUS
    (r_lo, r_hi), _, _ = support_box(tess)
    m_max = max(m for m, _ in pairs)

    def integrand(r):
        x = r / ball
        u = 2.0 * x * x - 1.0
        offset = r - tess.R
        hat = 1.0 - np.abs(offset) / tess.dR
        hat_prime = -np.sign(offset) / tess.dR
        tables = {}
        columns = []
        for m, n in pairs:
            if n not in tables:
                tables[n] = (
                    jacobi_table(m_max, n + 0.5, u),
                    jacobi_derivative_table(m_max, n + 0.5, u),
                )
            jac, jac_prime = tables[n][0][m], tables[n][1][m]
            radial = jac * x**n
            power_prime = n * x ** (n - 1) / ball if n > 0 else 0.0
            radial_prime = jac_prime * 4.0 * r / ball**2 * x**n + jac * power_prime
            columns.extend(
                [r * r * radial * hat, r * r * radial_prime * hat_prime, radial * hat]
            )
        return np.stack(columns, axis=-1)

    result = adaptive_gk(
        integrand, r_lo, r_hi, tol=config.GRAM_GK_TOLERANCE, breakpoints=(tess.R,)
    )
    return np.asarray(result.value).reshape(len(pairs), 3)


def _latitude_factors(tess: TesseroidParams, n_max: int) -> np.ndarray:
    """
    Gauss-Legendre latitudinal integrals for every (n, k), k <= n:
    int h P_{n,k} dt, int h P_{n,k} / (1 - t^2) dt and
    int (1 - t^2) h' P_{n,k}' dt on the two halves of the hat.

    Returns:
        np.ndarray: Array of shape (n_max + 1, n_max + 1, 3).
    """
    _, _, (t_lo, t_hi) = support_box(tess)
    _check_pole_distance(t_lo, t_hi)

    result = np.zeros((n_max + 1, n_max + 1, 3))
    for lo, hi in ((t_lo, min(tess.T, t_hi)), (max(tess.T, t_lo), t_hi)):
        if lo >= hi:
            continue
        rule = gauss_legendre(config.LATITUDE_GL_POINTS, lo, hi)
        t = rule.nodes
        offset = t - tess.T
        hat = 1.0 - np.abs(offset) / tess.dT
        hat_prime = -np.sign(0.5 * (lo + hi) - tess.T) / tess.dT
        one_minus = 1.0 - t * t
        legendre = assoc_legendre_table(n_max, t)
        slope = sine_times_legendre_prime_table(n_max, t)
        w = rule.weights
        result[..., 0] += legendre @ (w * hat)
        result[..., 1] += legendre @ (w * hat / one_minus)
        result[..., 2] += slope @ (w * hat_prime * np.sqrt(one_minus))
    return result


def mixed_products(tess: TesseroidParams, indices: list[PolyIndex]) -> np.ndarray:
    """
    H1 inner products of one hat function with many ball polynomials.

    The one-dimensional radial, longitudinal and latitudinal factors are
    computed once and combined per index as
    p q [a1 L0 b1 + a2 L0 b1 + a3 L1 b2 + a3 L0 b3].

    Args:
        tess (TesseroidParams): The hat function.
        indices (list[PolyIndex]): Polynomial indices.

    Returns:
        np.ndarray: One inner product per index.

    Raises:
        PoleProximityError: If the latitudinal support reaches the poles.
    """
    if not indices:
        return np.zeros(0)
    pairs = sorted({(i.m, i.n) for i in indices})
    radial = dict(zip(pairs, _radial_factors(tess, pairs)))
    longitude = _longitude_factors(tess, sorted({i.j for i in indices}))
    latitude = _latitude_factors(tess, max(i.n for i in indices))

    products = np.empty(len(indices))
    for col, i in enumerate(indices):
        a1, a2, a3 = radial[(i.m, i.n)]
        l0, l1 = longitude[i.j]
        b1, b2, b3 = latitude[i.n, abs(i.j)]
        norm = radial_normalization(i.m, i.n) * legendre_normalization(i.n, i.j)
        products[col] = norm * (
            a1 * l0 * b1 + a2 * l0 * b1 + a3 * l1 * b2 + a3 * l0 * b3
        )
    return products


def h1_mixed(tess: TesseroidParams, idx: PolyIndex) -> float:
    """H1 inner product of a hat function and a ball polynomial."""
    return float(mixed_products(tess, [idx])[0])


def h1_fehf_polys(tess: TesseroidParams, coefficients: dict[PolyIndex, float]) -> float:
    """Sum of c * <tess, G_i>_H1 over a {PolyIndex: c} mapping."""
    if not coefficients:
        return 0.0
    indices = list(coefficients)
    weights = np.array([coefficients[i] for i in indices])
    return float(mixed_products(tess, indices) @ weights)


# _________________________________________________________________________________________________


def h1_inner(d: DictionaryElement, other: DictionaryElement) -> float:
    """Dispatch to the three pairings."""
    if isinstance(d, PolyIndex) and isinstance(other, PolyIndex):
        return h1_poly_poly(d, other)
    if isinstance(d, TesseroidParams) and isinstance(other, TesseroidParams):
        return h1_fehf_fehf(d, other)
    if isinstance(d, TesseroidParams):
        return h1_mixed(d, other)
    return h1_mixed(other, d)


def h1_norm_sq(d: DictionaryElement) -> float:
    """<d, d>_H1."""
    return h1_inner(d, d)


def h1_brute_force(
    d: DictionaryElement, other: DictionaryElement, rule: BallRule
) -> float:
    """
    H1 inner product by direct tensor quadrature. Used as a reference for
    the semi-analytic formulas.
    """
    points = SphericalPoint(rule.r, rule.phi, rule.t)
    values = element_eval(d, points) * element_eval(other, points)
    gradients = np.sum(
        element_gradient(d, points) * element_gradient(other, points), axis=-1
    )
    return rule.integrate(values + gradients)


# _________________________________________________________________________________________________


class GramCache:
    """
    Memoized H1 inner products keyed by the canonically ordered element
    pair. Safe for concurrent readers and writers.
    """

    def __init__(self):
        self._values: dict[tuple, float] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(d: DictionaryElement, other: DictionaryElement) -> tuple:
        first, second = sorted((d, other), key=element_sort_key)
        return (first, second)

    def get(self, d: DictionaryElement, other: DictionaryElement) -> float:
        key = self.key(d, other)
        with self._lock:
            if key in self._values:
                return self._values[key]
        value = h1_inner(*key)
        with self._lock:
            return self._values.setdefault(key, value)

    def __len__(self) -> int:
        with self._lock:
            return len(self._values)


def gram_get(cache: GramCache, d: DictionaryElement, other: DictionaryElement) -> float:
    """Cached H1 inner product; symmetric in its element arguments."""
    return cache.get(d, other)
