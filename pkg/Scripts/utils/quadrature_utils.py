"""
This module provides the one-dimensional quadrature rules of the package:
fixed Gauss-Legendre rules (plain and composite), an adaptive 7/15-point
Gauss-Kronrod integrator with breakpoints, and a tensor-product ball rule
used as the brute-force oracle for inner products.
"""

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

import config

# 7/15-point Gauss-Kronrod pair, positive abscissae in decreasing order
_XGK = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ]
)
_WGK = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ]
)
_WG = np.array(
    [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ]
)

GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
G_WEIGHTS = np.zeros(15)
G_WEIGHTS[[1, 3, 5]] = _WG[:3]
G_WEIGHTS[7] = _WG[3]
G_WEIGHTS[[9, 11, 13]] = _WG[2::-1]


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a one-dimensional rule on [a, b]."""

    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]

    def integrate(self, values: np.ndarray) -> float | np.ndarray:
        """Apply the rule to function values sampled at the nodes (axis 0)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@dataclass(frozen=True)
class GKResult:
    """
    Outcome of an adaptive Gauss-Kronrod integration.

    Attributes:
        value (float | np.ndarray): The integral estimate.
        error (float | np.ndarray): Estimated absolute error.
        converged (bool): False if the subdivision limit stopped refinement.
        intervals (int): Number of subintervals used.
    """

    value: float | np.ndarray
    error: float | np.ndarray
    converged: bool
    intervals: int


# _________________________________________________________________________________________________


@lru_cache(maxsize=32)
def _reference_gauss_legendre(npoints: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(npoints)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(npoints: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    """
    Gauss-Legendre rule with npoints nodes on [a, b], exact for
    polynomials of degree 2 * npoints - 1.

    Args:
        npoints (int): Number of nodes, at least 1.
        a (float): Lower limit.
        b (float): Upper limit.

    Returns:
        QuadratureRule: The scaled rule.
    """
    if npoints < 1:
        raise ValueError("a Gauss-Legendre rule needs at least one node")
    x, w = _reference_gauss_legendre(int(npoints))
    half = 0.5 * (b - a)
    return QuadratureRule(half * x + 0.5 * (a + b), half * w, (a, b))


def composite_gauss_legendre(
    npoints: int, a: float, b: float, breakpoints=()
) -> QuadratureRule:
    """
    Glue npoints-node Gauss-Legendre rules on the segments of [a, b] cut at
    the given breakpoints. Breakpoints outside (a, b) are ignored.
    """
    cuts = _segment_cuts(a, b, breakpoints)
    rules = [gauss_legendre(npoints, lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:])]
    return QuadratureRule(
        np.concatenate([r.nodes for r in rules]),
        np.concatenate([r.weights for r in rules]),
        (a, b),
    )


def _segment_cuts(a: float, b: float, breakpoints) -> list[float]:
    inner = sorted({float(p) for p in breakpoints if a < p < b})
    return [a, *inner, b]


# _________________________________________________________________________________________________


def _gk_interval(f, a: float, b: float):
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    values = np.asarray(f(center + half * GK_NODES), dtype=float)
    kronrod = half * np.tensordot(GK_WEIGHTS, values, axes=(0, 0))
    gauss = half * np.tensordot(G_WEIGHTS, values, axes=(0, 0))
    return kronrod, np.abs(kronrod - gauss)


def adaptive_gk(
    f,
    a: float,
    b: float,
    tol: float = config.GK_TOLERANCE,
    tol_abs: float = config.GK_TOL_ABS,
    breakpoints=(),
    max_subdivisions: int = config.GK_MAX_SUBDIVISIONS,
) -> GKResult:
    """
    Adaptive 7/15-point Gauss-Kronrod integration of f over [a, b].

    The interval is first cut at the breakpoints; then the subinterval with
    the largest error estimate is bisected until the total error satisfies
    error <= max(tol * |value|, tol_abs) componentwise, or the number of
    subdivisions reaches max_subdivisions.

    Args:
        f (callable): Vectorized integrand. Receives a 1-D node array of
            length 15 and returns an array of shape (15,) or (15, ...) for
            vector-valued integrals.
        a (float): Lower limit.
        b (float): Upper limit.
        tol (float): Relative tolerance.
        tol_abs (float): Absolute tolerance floor.
        breakpoints (iterable): Points where f is not smooth.
        max_subdivisions (int): Bisection budget.

    Returns:
        GKResult: Value, error estimate and convergence flag.
    """
    if a == b:
        zero = np.zeros_like(np.asarray(f(np.full(15, float(a))), dtype=float)[0])
        return GKResult(_scalar(zero), _scalar(zero), True, 0)
    if a > b:
        flipped = adaptive_gk(f, b, a, tol, tol_abs, breakpoints, max_subdivisions)
        return GKResult(
            _scalar(-np.asarray(flipped.value)),
            flipped.error,
            flipped.converged,
            flipped.intervals,
        )

    heap = []
    counter = 0
    cuts = _segment_cuts(a, b, breakpoints)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        value, error = _gk_interval(f, lo, hi)
        heap.append((-float(np.max(error)), counter, lo, hi, value, error))
        counter += 1
    heapq.heapify(heap)

    total = sum(item[4] for item in heap)
    total_error = sum(item[5] for item in heap)
    subdivisions = 0
    converged = True
    while np.any(total_error > np.maximum(tol * np.abs(total), tol_abs)):
        if subdivisions >= max_subdivisions:
            converged = False
            break
        _, _, lo, hi, value, error = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        total = total - value
        total_error = total_error - error
        for s_lo, s_hi in ((lo, mid), (mid, hi)):
            s_value, s_error = _gk_interval(f, s_lo, s_hi)
            heapq.heappush(
                heap, (-float(np.max(s_error)), counter, s_lo, s_hi, s_value, s_error)
            )
            counter += 1
            total = total + s_value
            total_error = total_error + s_error
        subdivisions += 1

    # resum to drop the cancellation noise of the running totals
    total = sum(item[4] for item in heap)
    total_error = sum(item[5] for item in heap)
    return GKResult(_scalar(total), _scalar(total_error), converged, len(heap))


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class BallRule:
    """
    Tensor-product point set on (a shell of) the ball. The weights contain
    the Jacobian r^2, so sum(weights * f(points)) approximates int f dV.
    """

    r: np.ndarray
    phi: np.ndarray
    t: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))


def ball_quadrature(
    n_r: int,
    n_t: int,
    n_phi: int,
    r_range: tuple[float, float] = (0.0, config.BALL_RADIUS),
    phi_range: tuple[float, float] = (0.0, 2.0 * math.pi),
    t_range: tuple[float, float] = (-1.0, 1.0),
    breakpoints: tuple = ((), (), ()),
) -> BallRule:
    """
    Tensor Gauss-Legendre rule over r, phi and t.

    With the default ranges this is exact for r^k (k <= 2 n_r - 3)
    times surface polynomials of matching degree. Per-dimension breakpoints
    turn each factor into a composite rule, which keeps it accurate for
    integrands with kinks (hat functions).

    Args:
        n_r (int): Radial nodes per segment.
        n_t (int): Latitudinal nodes per segment.
        n_phi (int): Longitudinal nodes per segment.
        r_range (tuple): Radial range.
        phi_range (tuple): Longitudinal range.
        t_range (tuple): Range of the polar-distance cosine.
        breakpoints (tuple): Three iterables of breakpoints (r, phi, t).

    Returns:
        BallRule: Flattened nodes and weights.
    """
    r_rule = composite_gauss_legendre(n_r, *r_range, breakpoints[0])
    phi_rule = composite_gauss_legendre(n_phi, *phi_range, breakpoints[1])
    t_rule = composite_gauss_legendre(n_t, *t_range, breakpoints[2])

    r, phi, t = np.meshgrid(r_rule.nodes, phi_rule.nodes, t_rule.nodes, indexing="ij")
    w = (
        (r_rule.weights * r_rule.nodes**2)[:, None, None]
        * phi_rule.weights[None, :, None]
        * t_rule.weights[None, None, :]
    )
    return BallRule(r.ravel(), phi.ravel(), t.ravel(), w.ravel())
