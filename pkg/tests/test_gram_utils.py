import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import config
from Scripts.utils import gram_utils
from Scripts.utils.config_utils import (
    DictionarySettings,
    apply_quadrature,
    parse_run_config,
)
from Scripts.utils.geometry_utils import (
    TWO_PI,
    PolyIndex,
    TesseroidBounds,
    TesseroidParams,
    support_box,
)
from Scripts.utils.gram_utils import (
    GramCache,
    PoleProximityError,
    gram_get,
    h1_brute_force,
    h1_fehf_fehf,
    h1_fehf_polys,
    h1_mixed,
    h1_norm_sq,
    h1_poly_poly,
    mixed_products,
    overlap_bounds,
    overlap_interval,
    w_integral,
)
from Scripts.utils.quadrature_utils import ball_quadrature
from Scripts.utils.solver_utils import build_starting_dictionary, dictionary_gram

TESS = TesseroidParams(0.8, 1.0, 0.2, 0.1, 0.3, 0.2)
OTHER = TesseroidParams(0.75, 1.2, 0.3, 0.12, 0.25, 0.15)


def _support_rule(tess: TesseroidParams, *others: TesseroidParams, n: int = 10):
    """Tensor rule over the support of tess, cut at every kink of the hats involved."""
    (r_lo, r_hi), (phi_lo, phi_hi), (t_lo, t_hi) = support_box(tess)
    kinks = [[], [], []]
    for d in (tess, *others):
        for axis, (c, w) in enumerate(((d.R, d.dR), (d.Phi, d.dPhi), (d.T, d.dT))):
            shifts = (-TWO_PI, 0.0, TWO_PI) if axis == 1 else (0.0,)
            for shift in shifts:
                kinks[axis].extend([c + shift - w, c + shift, c + shift + w])
    return ball_quadrature(
        n,
        n,
        n,
        r_range=(r_lo, r_hi),
        phi_range=(phi_lo, phi_hi),
        t_range=(t_lo, t_hi),
        breakpoints=tuple(kinks),
    )


def test_overlap_interval_example():
    overlap = overlap_interval(0.5, 0.2, 0.6, 0.2, 0.0, 1.0)
    assert overlap.lb == pytest.approx(0.4)
    assert overlap.ub == pytest.approx(0.7)
    assert_allclose(overlap.critical_points, [0.4, 0.5, 0.6, 0.7])


def test_disjoint_supports():
    assert overlap_interval(0.2, 0.1, 0.6, 0.1).empty
    far = TesseroidParams(0.8, 4.0, 0.2, 0.1, 0.3, 0.2)
    assert h1_fehf_fehf(TESS, far) == 0.0


def test_longitude_overlap_across_zero():
    a = TesseroidParams(0.8, 0.1, 0.0, 0.1, 0.3, 0.2)
    b = TesseroidParams(0.8, TWO_PI - 0.1, 0.0, 0.1, 0.3, 0.2)
    _, phi_parts, _ = overlap_bounds(a, b)
    assert len(phi_parts) == 1
    assert phi_parts[0].lb == pytest.approx(-0.2)
    assert phi_parts[0].ub == pytest.approx(0.2)


def test_triangle_area():
    overlap = overlap_interval(0.0, 0.5, 0.0, 0.5)
    hat = (0.0, 0.5)
    # int hat^2 = 2 dx / 3
    assert w_integral(overlap, hat, hat) == pytest.approx(1.0 / 3.0)
    assert w_integral(overlap, hat, hat, derivative=True) == pytest.approx(4.0)


def test_constant_polynomial_norm():
    value = h1_poly_poly(PolyIndex(0, 0, 0), PolyIndex(0, 0, 0))
    assert value == pytest.approx(1.0, abs=1e-12)


def test_polynomial_kronecker_structure():
    indices = [
        PolyIndex(m, n, j)
        for m in range(6)
        for n in range(6)
        for j in range(-n, n + 1)
    ]
    for a in indices:
        for b in indices:
            if (a.n, a.j) != (b.n, b.j):
                assert h1_poly_poly(a, b) == 0.0


@pytest.mark.parametrize(
    "a, b",
    [
        (PolyIndex(1, 2, 1), PolyIndex(3, 2, 1)),
        (PolyIndex(2, 1, 0), PolyIndex(2, 1, 0)),
    ],
)
def test_polynomial_pair_by_brute_force(a, b):
    rule = ball_quadrature(24, 16, 32)
    assert h1_poly_poly(a, b) == pytest.approx(h1_brute_force(a, b, rule), rel=1e-6)


def test_radial_integrals_follow_the_installed_tolerance(monkeypatch):
    for name in ("GK_TOLERANCE", "GRAM_GK_TOLERANCE", "LATITUDE_GL_POINTS"):
        monkeypatch.setattr(config, name, getattr(config, name))
    tolerances = []
    adaptive_gk = gram_utils.adaptive_gk

    def recording_gk(f, a, b, tol, **kwargs):
        tolerances.append(tol)
        return adaptive_gk(f, a, b, tol=tol, **kwargs)

    monkeypatch.setattr(gram_utils, "adaptive_gk", recording_gk)
    idx = PolyIndex(2, 3, 1)
    for tol in (3.7e-4, 4.1e-11):
        text = f"[quadrature]\ngram_gk_tolerance = {tol!r}\n"
        apply_quadrature(parse_run_config(text))
        h1_poly_poly(idx, idx)
    assert tolerances == [3.7e-4, 4.1e-11]

    apply_quadrature(parse_run_config("[quadrature]\ngram_gk_tolerance = 3.7e-4\n"))
    h1_poly_poly(idx, idx)
    assert len(tolerances) == 2


def test_polynomial_h1_norm_exceeds_l2_norm():
    for idx in (PolyIndex(0, 1, 0), PolyIndex(2, 3, -1), PolyIndex(4, 0, 0)):
        assert h1_norm_sq(idx) > 1.0


@pytest.mark.parametrize(
    "a, b",
    [
        (TESS, TESS),
        (TESS, OTHER),
        (
            TesseroidParams(0.8, 0.1, 0.0, 0.1, 0.3, 0.2),
            TesseroidParams(0.78, TWO_PI - 0.1, 0.05, 0.1, 0.25, 0.2),
        ),
    ],
)
def test_hat_pair_by_brute_force(a, b):
    expected = h1_brute_force(a, b, _support_rule(a, b))
    assert h1_fehf_fehf(a, b) == pytest.approx(expected, rel=1e-6)
    assert h1_fehf_fehf(b, a) == pytest.approx(h1_fehf_fehf(a, b), rel=1e-12)


def test_hat_norm_is_positive():
    assert h1_norm_sq(TESS) > 0.0


def test_hat_pair_rotation_invariance():
    shifted = [
        TesseroidParams(d.R, d.Phi + 2.5, d.T, d.dR, d.dPhi, d.dT)
        for d in (TESS, OTHER)
    ]
    assert h1_fehf_fehf(*shifted) == pytest.approx(h1_fehf_fehf(TESS, OTHER), rel=1e-10)


def test_full_turn_shift_leaves_hat_products_unchanged():
    wrapped = TesseroidParams(0.78, TWO_PI - 0.1, 0.25, 0.1, 0.25, 0.2)
    near_zero = TesseroidParams(0.8, 0.05, 0.2, 0.1, 0.3, 0.2)
    assert h1_fehf_fehf(wrapped, near_zero) != 0.0
    for a, b in ((TESS, OTHER), (wrapped, near_zero)):
        turned_a, turned_b = [
            TesseroidParams(d.R, d.Phi + TWO_PI, d.T, d.dR, d.dPhi, d.dT)
            for d in (a, b)
        ]
        expected = h1_fehf_fehf(a, b)
        assert h1_fehf_fehf(turned_a, turned_b) == pytest.approx(expected, rel=1e-10)
        assert h1_fehf_fehf(turned_a, b) == pytest.approx(expected, rel=1e-10)
    idx = PolyIndex(1, 2, -1)
    turned = TesseroidParams(
        TESS.R, TESS.Phi + TWO_PI, TESS.T, TESS.dR, TESS.dPhi, TESS.dT
    )
    assert h1_mixed(turned, idx) == pytest.approx(h1_mixed(TESS, idx), rel=1e-10)


def test_hat_with_constant_polynomial():
    ball_constant = math.sqrt(3.0 / (4.0 * math.pi))
    radial = TESS.R**2 * TESS.dR + TESS.dR**3 / 6.0
    expected = ball_constant * radial * TESS.dPhi * TESS.dT
    assert h1_mixed(TESS, PolyIndex(0, 0, 0)) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize(
    "idx",
    [PolyIndex(0, 1, 1), PolyIndex(1, 2, -2), PolyIndex(2, 3, 0), PolyIndex(3, 4, 3)],
)
def test_hat_with_polynomial_by_brute_force(idx):
    expected = h1_brute_force(TESS, idx, _support_rule(TESS, n=14))
    assert h1_mixed(TESS, idx) == pytest.approx(expected, rel=1e-6, abs=1e-9)


def test_mixed_products_and_weighted_sum():
    indices = [PolyIndex(0, 0, 0), PolyIndex(1, 2, -1), PolyIndex(0, 3, 2)]
    products = mixed_products(OTHER, indices)
    for value, idx in zip(products, indices):
        assert value == pytest.approx(h1_mixed(OTHER, idx), rel=1e-12)
    coefficients = {indices[0]: 2.0, indices[2]: -1.0}
    expected = 2.0 * products[0] - products[2]
    assert h1_fehf_polys(OTHER, coefficients) == pytest.approx(expected, rel=1e-12)
    assert h1_fehf_polys(OTHER, {}) == 0.0


def test_pole_proximity_is_an_error():
    bounds = TesseroidBounds(eps_t=1e-7)
    tess = TesseroidParams(0.8, 1.0, 0.99, 0.1, 0.3, 0.02, bounds=bounds)
    with pytest.raises(PoleProximityError):
        h1_fehf_fehf(tess, tess)
    with pytest.raises(PoleProximityError):
        h1_mixed(tess, PolyIndex(0, 1, 0))


def test_cache_is_symmetric_and_memoized():
    cache = GramCache()
    first = gram_get(cache, TESS, PolyIndex(1, 1, 0))
    second = gram_get(cache, PolyIndex(1, 1, 0), TESS)
    assert first == second
    assert len(cache) == 1
    assert gram_get(cache, TESS, PolyIndex(1, 1, 0)) == first


def test_small_dictionary_gram_is_positive_semidefinite():
    elements = build_starting_dictionary(DictionarySettings(1, 2, (2, 3, 2)))
    gram = dictionary_gram(elements)
    assert_allclose(gram, gram.T, atol=1e-12)
    assert np.linalg.eigvalsh(0.5 * (gram + gram.T)).min() >= -1e-8


@pytest.mark.slow
def test_starting_dictionary_gram_is_positive_semidefinite():
    elements = build_starting_dictionary()
    assert len(elements) == 341
    gram = dictionary_gram(elements)
    assert np.linalg.eigvalsh(0.5 * (gram + gram.T)).min() >= -1e-8


# _________________________________________________________________________________________________


N_RANDOM_PAIRS = 50


def _random_hat(rng: np.random.Generator) -> TesseroidParams:
    """Unclipped hat clear of the poles, up to nearly half the circle wide."""
    R = rng.uniform(0.62, 0.9)
    dR = rng.uniform(0.02, min(R - 0.56, 1.0 - R, 0.2))
    T = rng.uniform(-0.6, 0.6)
    dT = rng.uniform(0.02, min(0.25, 0.85 - abs(T)))
    return TesseroidParams(
        R, rng.uniform(0.0, TWO_PI), T, dR, rng.uniform(0.05, 3.0), dT
    )


def _random_hat_pair(seed: int) -> tuple[TesseroidParams, TesseroidParams]:
    rng = np.random.default_rng(seed)
    a = _random_hat(rng)
    if seed % 10 == 0:
        # centres on both sides of phi = 0
        phi = rng.uniform(0.0, 0.1)
        a = TesseroidParams(a.R, phi, a.T, a.dR, rng.uniform(0.3, 3.0), a.dT)
        b = TesseroidParams(
            a.R,
            phi - rng.uniform(0.15, 0.3),
            a.T,
            a.dR * rng.uniform(0.5, 1.0),
            rng.uniform(0.3, 3.0),
            a.dT * rng.uniform(0.5, 1.0),
        )
        return a, b
    neighbour = _random_hat(rng)
    b = TesseroidParams(
        float(np.clip(a.R + rng.uniform(-0.8, 0.8) * a.dR, 0.62, 0.9)),
        a.Phi + rng.uniform(-0.8, 0.8) * a.dPhi,
        float(np.clip(a.T + rng.uniform(-0.8, 0.8) * a.dT, -0.6, 0.6)),
        min(neighbour.dR, 0.05),
        neighbour.dPhi,
        min(neighbour.dT, 0.25),
    )
    return a, b


def _random_index(rng: np.random.Generator) -> PolyIndex:
    n = int(rng.integers(0, 5))
    return PolyIndex(int(rng.integers(0, 4)), n, int(rng.integers(-n, n + 1)))


@pytest.mark.parametrize("seed", range(N_RANDOM_PAIRS))
def test_random_polynomial_pairs_by_brute_force(seed):
    rng = np.random.default_rng(seed)
    a = _random_index(rng)
    b = _random_index(rng)
    if seed % 2 == 0:
        b = PolyIndex(b.m, a.n, a.j)
    expected = h1_brute_force(a, b, ball_quadrature(24, 16, 32))
    assert h1_poly_poly(a, b) == pytest.approx(expected, rel=1e-5, abs=1e-9)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(N_RANDOM_PAIRS))
def test_random_hat_pairs_by_brute_force(seed):
    a, b = _random_hat_pair(seed)
    expected = h1_brute_force(a, b, _support_rule(a, b, n=14))
    assert h1_fehf_fehf(a, b) == pytest.approx(expected, rel=1e-5, abs=1e-12)


def test_random_hat_pairs_include_wrapped_centres():
    wrapped = [_random_hat_pair(seed) for seed in range(0, N_RANDOM_PAIRS, 10)]
    assert wrapped
    for a, b in wrapped:
        assert a.Phi <= 0.1
        assert b.Phi >= TWO_PI - 0.3
        _, phi_parts, _ = overlap_bounds(a, b)
        assert -TWO_PI in [part.shift for part in phi_parts]


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(N_RANDOM_PAIRS))
def test_random_hat_polynomial_pairs_by_brute_force(seed):
    rng = np.random.default_rng(1000 + seed)
    tess = _random_hat(rng)
    idx = _random_index(rng)
    expected = h1_brute_force(tess, idx, _support_rule(tess, n=20))
    assert h1_mixed(tess, idx) == pytest.approx(expected, rel=1e-5, abs=1e-9)
