import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from Scripts.utils.basis_utils import element_eval
from Scripts.utils.dspo_utils import (
    candidate_rays,
    dspo_apply,
    dspo_matrix_column,
    element_breakpoints,
    line_integral,
    poly_matrix,
)
from Scripts.utils.geometry_utils import PolyIndex, TesseroidBounds, TesseroidParams
from Scripts.utils.ray_utils import Ray, RaySet, synthetic_chords

DIAMETER = Ray(np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
TESS = TesseroidParams(0.8, 1.0, 0.2, 0.1, 0.3, 0.2)
OTHER = TesseroidParams(0.75, 1.2, 0.3, 0.12, 0.25, 0.15)


def _rays_through(tess: TesseroidParams, n: int, seed: int) -> RaySet:
    """Chords from surface points through random points of the tesseroid support."""
    rng = np.random.default_rng(seed)
    rays = []
    for _ in range(n):
        r = tess.R + rng.uniform(-0.8, 0.8) * tess.dR
        phi = tess.Phi + rng.uniform(-0.8, 0.8) * tess.dPhi
        t = tess.T + rng.uniform(-0.8, 0.8) * tess.dT
        s = math.sqrt(1.0 - t * t)
        inside = r * np.array([s * math.cos(phi), s * math.sin(phi), t])
        start = rng.normal(size=3)
        start /= np.linalg.norm(start)
        direction = inside - start
        # second intersection of the line with the unit sphere
        end = start - 2.0 * (start @ direction) / (direction @ direction) * direction
        rays.append(Ray(np.stack([start, end])))
    return RaySet(rays)


def test_constant_field_gives_the_length():
    ray = Ray(np.array([[0.0, 0.0, -0.9], [0.3, 0.1, 0.0], [0.2, 0.7, 0.5]]))
    result = line_integral(lambda p: np.ones_like(p.r), ray)
    assert result.value == pytest.approx(ray.length, rel=1e-12)
    assert result.converged


def test_constant_polynomial_along_a_diameter():
    result = dspo_apply(PolyIndex(0, 0, 0), DIAMETER)
    expected = 2.0 * math.sqrt(3.0 / (4.0 * math.pi))
    assert result.value == pytest.approx(expected, rel=1e-12)


def test_disjoint_hat_gives_zero():
    far = TesseroidParams(0.8, 4.0, -0.5, 0.1, 0.2, 0.1)
    ray = Ray(np.array([[0.0, 0.0, 1.0], [0.0, 0.6, 0.8]]))
    assert dspo_apply(far, ray).value == 0.0


def test_breakpoints_of_a_diameter_chord():
    tess = TesseroidParams(
        0.5, 0.0, 0.0, 0.2, 0.3, 0.2, bounds=TesseroidBounds(rho=0.1)
    )
    taus = element_breakpoints(tess, DIAMETER.vertices[0], DIAMETER.vertices[1])
    for expected in (0.15, 0.25, 0.35, 0.65, 0.75, 0.85):
        assert min(abs(tau - expected) for tau in taus) < 1e-12
    assert element_breakpoints(PolyIndex(1, 1, 0), *DIAMETER.vertices) == []


def test_hat_integral_bounded_by_the_chord():
    rays = _rays_through(TESS, 20, seed=0)
    for ray in rays.rays:
        value = dspo_apply(TESS, ray).value
        assert 0.0 < value <= ray.length


def test_linearity():
    rays = _rays_through(TESS, 10, seed=1)
    alpha, beta = 1.7, -0.4
    tol = 1e-11
    columns = [dspo_matrix_column(d, rays, tol=tol) for d in (TESS, OTHER)]

    def combined(p):
        return alpha * element_eval(TESS, p) + beta * element_eval(OTHER, p)

    def kinks(a, b):
        return element_breakpoints(TESS, a, b) + element_breakpoints(OTHER, a, b)

    for i, ray in enumerate(rays.rays):
        expected = line_integral(combined, ray, breakpoints=kinks, tol=tol).value
        value = alpha * columns[0][i] + beta * columns[1][i]
        assert abs(value - expected) < 1e-9 * (abs(alpha) + abs(beta))


def test_resampling_invariance():
    idx = PolyIndex(2, 3, 1)
    a, b = np.array([0.6, -0.7, 0.2]), np.array([-0.5, 0.4, 0.75])
    coarse = Ray(np.stack([a, b]))
    fine = Ray(np.stack([a + k / 4.0 * (b - a) for k in range(5)]))
    expected = dspo_apply(idx, coarse, tol=1e-10).value
    assert dspo_apply(idx, fine, tol=1e-10).value == pytest.approx(expected, rel=1e-6)


def test_column_of_a_single_active_ray():
    rays = _rays_through(TESS, 4, seed=2)
    column = dspo_matrix_column(TESS, rays, active=(2, 3))
    assert column.shape == (1,)
    assert column[0] == dspo_apply(TESS, rays.rays[2]).value


def test_column_flags_and_threads():
    rays = synthetic_chords(30, seed=4, depth_biased=False)
    serial, flags = dspo_matrix_column(TESS, rays, workers=1, return_flags=True)
    threaded = dspo_matrix_column(TESS, rays, workers=4)
    assert_array_equal(serial, threaded)
    assert flags.all()


def test_prefilter_never_drops_a_hit():
    rays = synthetic_chords(150, seed=6, depth_biased=True)
    hits = [
        i for i, ray in enumerate(rays.rays) if dspo_apply(TESS, ray).value != 0.0
    ]
    kept = set(candidate_rays(TESS, rays, np.arange(len(rays))).tolist())
    assert set(hits) <= kept


def test_poly_matrix_matches_columns():
    indices = [PolyIndex(0, 0, 0), PolyIndex(1, 2, -1), PolyIndex(0, 3, 3)]
    rays = synthetic_chords(8, seed=9)
    matrix = poly_matrix(indices, rays, tol=1e-10)
    for k, idx in enumerate(indices):
        column = dspo_matrix_column(idx, rays, tol=1e-10)
        assert_allclose(matrix[:, k], column, rtol=1e-8, atol=1e-12)
    assert poly_matrix([], rays).shape == (8, 0)
