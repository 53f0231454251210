import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from conftest import random_directions
from dpdloc.array import (ArrayGeometry, Direction, angular_distance, cart_to_direction,
                          load_preset, make_direction_grid, radial_function, resolve_geometry,
                          sh_index, sh_matrix, sh_steering, sph_harmonic, steering_matrix,
                          steering_vector, unit_vector)


# -- spherical harmonics ----------------------------------------------------

def test_y00_constant():
    for az, el in [(0.0, 0.0), (1.0, -0.3), (5.0, 1.2)]:
        assert sph_harmonic(0, 0, az, el) == pytest.approx(1 / math.sqrt(4 * math.pi), abs=1e-15)


def test_y10_at_north_pole():
    # inclination 0 is elevation +90 deg; Y_1^0 = sqrt(3/4pi) cos(theta)
    assert sph_harmonic(1, 0, 0.3, math.pi / 2).real == pytest.approx(0.48860251, abs=1e-8)


def test_closed_form_condon_shortley():
    # Y_1^1 = -sqrt(3/8pi) sin(theta) e^{i phi}
    az, el = 0.7, 0.2
    theta = math.pi / 2 - el
    expected = -math.sqrt(3 / (8 * math.pi)) * math.sin(theta) * complex(math.cos(az), math.sin(az))
    assert sph_harmonic(1, 1, az, el) == pytest.approx(expected, abs=1e-14)


def test_against_mpmath(rng):
    az, el = random_directions(rng, 5)
    for n in range(5):
        for m in range(-n, n + 1):
            for a, e in zip(az, el):
                ref = complex(mpmath.spherharm(n, m, math.pi / 2 - e, a))
                assert abs(sph_harmonic(n, m, a, e) - ref) < 1e-12


@pytest.mark.parametrize("n,m", [(1, 2), (-1, 0), (2, -3), (0.5, 0)])
def test_invalid_index(n, m):
    with pytest.raises(ValueError):
        sph_harmonic(n, m, 0.0, 0.0)


def test_orthonormality_gauss_legendre():
    # 6 x 12 Gauss-Legendre x trapezoid grid integrates degree <= 8 exactly
    x, w = np.polynomial.legendre.leggauss(6)
    az = np.arange(12) * 2 * np.pi / 12
    el = np.arcsin(x)
    A, E = np.meshgrid(az, el)
    W = np.outer(w, np.full(12, 2 * np.pi / 12)).ravel()
    Y = sh_matrix(4, A.ravel(), E.ravel())
    gram = (Y.conj().T * W) @ Y
    assert np.max(np.abs(gram - np.eye(25))) < 1e-10


def test_addition_theorem(rng):
    az1, el1 = random_directions(rng, 20)
    az2, el2 = random_directions(rng, 20)
    n_idx, _ = sh_index(4)
    y1 = sh_matrix(4, az1, el1)
    y2 = sh_matrix(4, az2, el2)
    cosg = np.sum(unit_vector(az1, el1) * unit_vector(az2, el2), axis=1)
    for n in range(5):
        sel = n_idx == n
        lhs = np.sum(y1[:, sel] * y2[:, sel].conj(), axis=1)
        rhs = (2 * n + 1) / (4 * np.pi) * special.eval_legendre(n, cosg)
        assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_sh_steering_ordering_and_norm(rng):
    assert sh_steering(0, (1.0, 0.2)) == pytest.approx([1 / math.sqrt(4 * math.pi)])
    az, el = random_directions(rng, 1)
    y = sh_steering(3, (az[0], el[0]))
    assert y.shape == (16,)
    n, m = sh_index(3)
    assert list(zip(n[:5], m[:5])) == [(0, 0), (1, -1), (1, 0), (1, 1), (2, -2)]
    for i, (nn, mm) in enumerate(zip(n, m)):
        assert y[i] == pytest.approx(sph_harmonic(nn, mm, az[0], el[0]))
    assert np.linalg.norm(y) ** 2 == pytest.approx(16 / (4 * np.pi), abs=1e-10)


# -- radial functions ---------------------------------------------------------

def test_radial_open_examples():
    assert radial_function(0, 0.0, "open") == pytest.approx(4 * np.pi)
    assert radial_function(0, 1.0, "open").real == pytest.approx(4 * np.pi * math.sin(1.0), abs=1e-12)
    # 4 pi sin(1) = 10.57423...; the commonly quoted 10.5735 is a rounding slip
    assert radial_function(0, 1.0, "open") == pytest.approx(10.5735, abs=1e-3)


def test_radial_rigid_against_mpmath():
    mpmath.mp.dps = 40
    n, x = 1, mpmath.mpf(2)

    def jn(v):
        return mpmath.sqrt(mpmath.pi / (2 * v)) * mpmath.besselj(n + 0.5, v)

    def yn(v):
        return mpmath.sqrt(mpmath.pi / (2 * v)) * mpmath.bessely(n + 0.5, v)

    def hn(v):
        return jn(v) - 1j * yn(v)

    jd = mpmath.diff(jn, x)
    hd = mpmath.diff(hn, x)
    ref = 4 * mpmath.pi * (1j ** n) * (jn(x) - jd / hd * hn(x))
    got = radial_function(1, 2.0, "rigid")
    assert abs(got - complex(ref)) / abs(complex(ref)) < 1e-8


def test_radial_rigid_small_kr_limit():
    assert radial_function(0, 0.0, "rigid") == pytest.approx(4 * np.pi)
    # continuous across the small-argument switch
    a = radial_function(1, 1e-6 * 0.999, "rigid")
    b = radial_function(1, 1e-6 * 1.001, "rigid")
    assert abs(a - b) / abs(b) < 1e-2


def test_radial_rejects_negative_kr():
    with pytest.raises(ValueError):
        radial_function(0, -1.0)


# -- steering -----------------------------------------------------------------

def test_mic_at_origin_unit_response():
    g = ArrayGeometry([[0, 0, 0]])
    assert steering_vector(g, (1.0, 0.5), 1234.0)[0] == pytest.approx(1.0)


def test_open_steering_phase():
    g = ArrayGeometry([[0, 0, 0.05]])
    v = steering_vector(g, (0.0, math.pi / 2), 1000.0, 343.0)
    assert np.angle(v[0]) == pytest.approx(2 * math.pi * 1000 / 343 * 0.05, abs=1e-12)
    assert np.angle(v[0]) == pytest.approx(0.9158, abs=2e-4)


def test_open_unit_modulus_and_conjugate_symmetry(nao12, rng):
    az, el = random_directions(rng, 50)
    for f in (200.0, 1000.0, 5000.0):
        v = steering_matrix(nao12, az, el, f)
        assert np.allclose(np.abs(v), 1.0, atol=1e-12)
        # negating the propagation direction conjugates the response
        flipped = ArrayGeometry(-nao12.positions)
        assert np.allclose(np.conj(v), steering_matrix(flipped, az, el, f), atol=1e-12)


def _truncation_gap(geometry, rng, f, lo, hi):
    az, el = random_directions(rng, 10)
    a = steering_matrix(geometry, az, el, f, truncation=lo)
    b = steering_matrix(geometry, az, el, f, truncation=hi)
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.xfail(strict=True, reason="the series tail beyond ceil(kr)+2 is ~5e-3 relative "
                                       "for kr in [1, 3]; 1e-6 needs about ceil(kr)+8 terms")
def test_rigid_truncation_n_plus_2_within_1e6(em32, rng):
    for f in (500.0, 2000.0, 3900.0):
        n = math.ceil(2 * np.pi * f / 343 * em32.radius)
        assert _truncation_gap(em32, rng, f, n + 2, n + 6) < 1e-6


def test_rigid_series_converges(em32, rng):
    for f in (500.0, 2000.0, 3900.0):
        n = math.ceil(2 * np.pi * f / 343 * em32.radius)
        assert _truncation_gap(em32, rng, f, n + 2, n + 6) < 2e-2
        assert _truncation_gap(em32, rng, f, n + 8, n + 12) < 1e-6


def test_rigid_series_matches_double_sum(em32, rng):
    # explicit sum over (n, m) versus the Legendre closed form
    az, el = random_directions(rng, 3)
    f = 1500.0
    kr = 2 * np.pi * f / 343 * em32.radius
    order = math.ceil(kr) + 2
    n_idx, _ = sh_index(order)
    b = radial_function(n_idx, kr, "rigid")
    ym = sh_matrix(order, *em32.mic_directions)
    yd = sh_matrix(order, az, el)
    ref = (ym * b) @ yd.conj().T
    assert np.allclose(steering_matrix(em32, az, el, f), ref, atol=1e-10)


def test_rigid_far_from_sphere_surface_rejected():
    with pytest.raises(ValueError):
        ArrayGeometry([[0.05, 0, 0]], model="rigid", radius=0.042)


def test_steering_rejects_nonpositive_frequency(nao12):
    with pytest.raises(ValueError):
        steering_matrix(nao12, [0.0], [0.0], 0.0)


# -- directions and grids -----------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.floats(0, 2 * math.pi, exclude_max=True), st.floats(-1.55, 1.55))
def test_direction_round_trip(az, el):
    u = unit_vector(az, el)
    assert abs(np.linalg.norm(u) - 1) < 1e-12
    a2, e2 = cart_to_direction(u)
    assert abs(e2 - el) < 1e-9
    assert abs(math.remainder(float(a2) - az, 2 * math.pi)) < 1e-9


def test_direction_degrees():
    d = Direction.from_degrees(-30, 10)
    assert d.to_degrees() == pytest.approx((330, 10))


def test_angular_distance_small_angles():
    assert angular_distance(0.0, 0.0, 1e-9, 0.0) == pytest.approx(1e-9, rel=1e-6)
    assert angular_distance(0.0, 0.0, math.pi, 0.0) == pytest.approx(math.pi)


def test_grid_sizes_and_validity():
    g10 = make_direction_grid(10.0)
    assert 300 <= len(g10) <= 900
    for res in (0.5, 2.0, 6.0, 20.0):
        g = make_direction_grid(res)
        target = 41253 / res ** 2
        assert target / 2 <= len(g) <= target * 2
        assert np.all((g.azimuth >= 0) & (g.azimuth < 2 * np.pi))
        assert np.all(np.abs(g.elevation) <= np.pi / 2)


def test_grid_deterministic_and_distinct():
    a, b = make_direction_grid(6.0), make_direction_grid(6.0)
    assert np.array_equal(a.azimuth, b.azimuth) and np.array_equal(a.elevation, b.elevation)
    u = a.unit_vectors
    gram = u @ u.T
    np.fill_diagonal(gram, -1)
    assert gram.max() < 1 - 1e-9
    assert len(a) >= 2 * 32


@pytest.mark.parametrize("res", [0.4, 21.0])
def test_grid_resolution_out_of_range(res):
    with pytest.raises(ValueError):
        make_direction_grid(res)


def test_grid_nearest():
    g = make_direction_grid(6.0)
    assert g.nearest(g[17]) == 17


# -- geometry files -------------------------------------------------------------

def test_presets():
    em = load_preset("eigenmike32")
    assert em.n_channels == 32 and em.model == "rigid" and em.radius == pytest.approx(0.042)
    nao = load_preset("nao12")
    assert nao.n_channels == 12 and nao.model == "open"
    with pytest.raises(ValueError):
        load_preset("nope")


def test_geometry_round_trip(tmp_path, em32):
    p = tmp_path / "g.json"
    em32.save(p)
    g = resolve_geometry(str(p))
    assert np.array_equal(g.positions, em32.positions)
    assert (g.model, g.radius, g.label) == (em32.model, em32.radius, em32.label)


def test_geometry_validation():
    with pytest.raises(ValueError):
        ArrayGeometry(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        ArrayGeometry([[0, 0]])
    with pytest.raises(ValueError):
        ArrayGeometry([[0, 0, 0]], model="baffled")
    with pytest.raises(ValueError):
        ArrayGeometry([[0.042, 0, 0]], model="rigid")
