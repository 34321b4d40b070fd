import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from Scripts.utils.geometry_utils import (
    DEFAULT_BOUNDS,
    DegenerateFrameError,
    PolyIndex,
    SphericalPoint,
    TesseroidParams,
    cartesian_to_spherical,
    element_from_dict,
    element_sort_key,
    element_to_dict,
    local_frame,
    longitude_offset,
    normalize_longitude,
    spherical_to_cartesian,
    support_box,
    validate_tesseroid,
)
from Scripts.utils.solver_utils import build_starting_dictionary


def test_coordinate_round_trip():
    rng = np.random.default_rng(0)
    r = rng.uniform(0.01, 1.0, 1000)
    phi = rng.uniform(0.0, 2.0 * math.pi, 1000)
    t = rng.uniform(-0.999, 0.999, 1000)

    back = cartesian_to_spherical(spherical_to_cartesian(SphericalPoint(r, phi, t)))

    assert_allclose(back.r, r, atol=1e-12)
    assert_allclose(back.t, t, atol=1e-12)
    assert_allclose(longitude_offset(back.phi, phi), 0.0, atol=1e-12)


def test_origin_maps_to_north_pole_convention():
    p = cartesian_to_spherical(np.zeros(3))
    assert (p.r, p.phi, p.t) == (0.0, 0.0, 1.0)


@pytest.mark.parametrize("phi", [-1e-18, -2.0 * math.pi, 2.0 * math.pi, 7.0, -0.5])
def test_normalize_longitude_range(phi):
    value = normalize_longitude(phi)
    assert 0.0 <= value < 2.0 * math.pi
    assert math.isclose(math.cos(value), math.cos(phi), abs_tol=1e-12)


def test_local_frame_is_right_handed_orthonormal():
    rng = np.random.default_rng(1)
    phi = rng.uniform(0.0, 2.0 * math.pi, 200)
    t = rng.uniform(-0.99, 0.99, 200)

    e_r, e_phi, e_t = local_frame(phi, t)

    for a in (e_r, e_phi, e_t):
        assert_allclose(np.linalg.norm(a, axis=-1), 1.0, atol=1e-12)
    assert_allclose(np.sum(e_r * e_phi, axis=-1), 0.0, atol=1e-12)
    assert_allclose(np.sum(e_r * e_t, axis=-1), 0.0, atol=1e-12)
    assert_allclose(np.sum(e_phi * e_t, axis=-1), 0.0, atol=1e-12)
    assert_allclose(np.cross(e_r, e_phi), e_t, atol=1e-12)


@pytest.mark.parametrize("t", [1.0, -1.0])
def test_local_frame_at_pole_raises(t):
    with pytest.raises(DegenerateFrameError):
        local_frame(0.3, t)


def test_valid_tesseroid_has_no_violations():
    tess = TesseroidParams(0.8, math.pi, 0.0, 0.1, 1.0, 0.3)
    assert validate_tesseroid(tess) == []


@pytest.mark.parametrize(
    "params, violation",
    [
        ((0.8, 0.1, 0.0, 0.1, 1.0, 0.6), "ΔT ≤ 0.5"),
        ((0.5, 0.1, 0.0, 0.1, 1.0, 0.3), "R ≥ ρ𝐑"),
        ((0.8, 0.1, 0.0, 0.6, 1.0, 0.3), "ΔR ≤ 𝐑/2"),
        ((0.8, 0.1, 0.0, 0.1, 4.0, 0.3), "ΔΦ ≤ π"),
        ((0.8, 0.1, 1.0, 0.1, 1.0, 0.3), "T ≤ 1−ε_T"),
    ],
)
def test_violations_are_named(params, violation):
    assert violation in validate_tesseroid(TesseroidParams(*params))


def test_phi_is_normalized_on_construction():
    tess = TesseroidParams(0.8, 2.0 * math.pi + 0.25, 0.0, 0.1, 0.2, 0.3)
    assert math.isclose(tess.Phi, 0.25, abs_tol=1e-12)


def test_support_box_is_clipped_to_the_mantle():
    tess = TesseroidParams(DEFAULT_BOUNDS.r_min, 0.0, 0.9, 0.2, 0.5, 0.5)
    (r_lo, r_hi), (phi_lo, phi_hi), (t_lo, t_hi) = support_box(tess)
    assert r_lo == DEFAULT_BOUNDS.r_min
    assert math.isclose(r_hi, DEFAULT_BOUNDS.r_min + 0.2)
    assert (phi_lo, phi_hi) == (-0.5, 0.5)
    assert t_hi == DEFAULT_BOUNDS.t_max


def test_starting_grid_hat_functions_are_valid():
    for element in build_starting_dictionary():
        if isinstance(element, TesseroidParams):
            assert validate_tesseroid(element) == []


def test_poly_index_rejects_out_of_range_order():
    with pytest.raises(ValueError):
        PolyIndex(0, 2, 3)
    with pytest.raises(ValueError):
        PolyIndex(-1, 0, 0)


def test_sort_key_puts_polynomials_first():
    tess = TesseroidParams(0.8, 0.1, 0.0, 0.1, 1.0, 0.3)
    elements = [tess, PolyIndex(1, 0, 0), PolyIndex(0, 2, -1)]
    ordered = sorted(elements, key=element_sort_key)
    assert ordered == [PolyIndex(0, 2, -1), PolyIndex(1, 0, 0), tess]


def test_element_dict_encoding():
    tess = TesseroidParams(0.8, 0.1, -0.2, 0.1, 1.0, 0.3)
    for element in (tess, PolyIndex(3, 2, -2)):
        assert element_from_dict(element_to_dict(element)) == element
    with pytest.raises(ValueError):
        element_from_dict({"type": "wavelet"})
