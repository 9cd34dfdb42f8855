import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from alpertlab.dyadic import DyadicError, DyadicSquare, GridSlice, dtree_to_slice, squares_at_level
from alpertlab.fields import SampledField2D, uniform_grid
from alpertlab.modulation import (KakeyaPolynomial, ModulationError, ModulationSequence,
                                  build_kakeya_polynomial, father_coefficient, father_factors,
                                  father_support, father_wavelet, flat_constant,
                                  gamma_coefficients, gamma_phase_covariance, grid_distance,
                                  martingale_transform, mod_factorization_check, modulate,
                                  modulated_coefficient, modulation_window, plateau_interior,
                                  random_modulation, random_signs, scales_decay_scan,
                                  translation_commutation_check)


def test_father_wavelet_normalised_and_supported():
    assert flat_constant() == pytest.approx(1.0, abs=1e-12)
    I = DyadicSquare(2, 1, 2)
    assert father_wavelet(I).norm() == pytest.approx(1.0, abs=1e-12)
    x0, x1, y0, y1 = father_support(I)
    d = I.dilate(2.0)
    assert d[0] <= x0 and x1 <= d[1] and d[2] <= y0 and y1 <= d[3]


def test_father_coefficient_refined_quadrature_oracle():
    I = DyadicSquare(1, 0, 1)
    fx, fy = father_factors(I)
    g = lambda x: np.sin(3 * x) + 1
    h = lambda y: np.cos(2 * y)
    want = 1.0
    for fac, fn in ((fx, g), (fy, h)):
        lo, hi = fac.support()
        want *= quad(lambda t: fac.values(np.array([t]))[0, 0] * fn(t), lo, hi,
                     points=list(fac.breaks()[0]), limit=200, epsabs=1e-14)[0]
    x, w = uniform_grid(-0.5, 1.5, 1 / 1024)
    # Simpson weights on the refined grid
    w = np.full(len(x), 1 / 1024 / 3)
    w[1:-1:2] *= 4
    w[2:-1:2] *= 2
    f = SampledField2D(x, x, w, w, np.outer(g(x), h(x)))
    assert father_coefficient(f, I) == pytest.approx(want, rel=1e-8)


def test_modulation_sequence_validation():
    I = DyadicSquare(2, 0, 0)
    lo, hi = modulation_window(2)
    assert (lo, hi) == (16, 16 * 1024)
    with pytest.raises(ModulationError):
        ModulationSequence(2, {I: (1.0, 0.0)})
    with pytest.raises(ModulationError):
        ModulationSequence(2, {I: (20.0, 0.0, 1.0)})
    with pytest.raises(ModulationError):
        ModulationSequence(3, {I: (20.0, 0.0)})
    u = ModulationSequence(2, {I: (20.0, 0.0)})
    assert u[I].shape == (3,) and I in u and u.squares == [I]
    assert np.all(ModulationSequence.zero([I], 2)[I] == 0)


def test_random_modulation_in_window_and_seeded():
    sq = squares_at_level(2)
    a = random_modulation(sq, 2, np.random.default_rng(0))
    b = random_modulation(sq, 2, np.random.default_rng(0))
    lo, hi = modulation_window(2)
    for I in sq:
        assert lo <= np.hypot(*a.horizontal(I)) <= hi
        assert np.array_equal(a[I], b[I])


def test_modulate_single_piece_keeps_modulus():
    I = DyadicSquare(1, 0, 0)
    phi = father_wavelet(I)
    u = ModulationSequence(1, {I: (5.0, -3.0)})
    m = modulate({I: phi}, u)
    assert np.allclose(np.abs(m.values), np.abs(phi.values))
    with pytest.raises(ModulationError):
        modulate({DyadicSquare(2, 0, 0): phi}, u)
    with pytest.raises(ModulationError):
        modulate({}, u)


def test_modulated_coefficient_against_dense_grid(system2):
    I = DyadicSquare(1, 0, 0)
    J = DyadicSquare(3, 3, 2)          # straddles the plateau edge of phi_I
    u = np.array([7.0, -11.0])
    got = modulated_coefficient(I, J, u, system2)
    x0, x1, y0, y1 = father_support(I)
    n = 24001                          # uniform Simpson, converged to ~1e-10 here

    def simpson(a, b):
        x = np.linspace(a, b, n)
        w = np.full(n, (b - a) / (n - 1) / 3)
        w[1:-1:2] *= 4
        w[2:-1:2] *= 2
        return x, w

    (x, wx), (y, wy) = simpson(x0, x1), simpson(y0, y1)
    fx, fy = father_factors(I)
    px = wx * fx.values(x)[:, 0] * np.exp(1j * u[0] * x)
    py = wy * fy.values(y)[:, 0] * np.exp(1j * u[1] * y)
    F1 = system2.pieces(x, J.level, J.ix)
    F2 = system2.pieces(y, J.level, J.iy)
    for a in (0, 4, system2.dim - 1):
        want = px @ F1 @ system2.factor_matrices[a] @ F2.T @ py
        assert got[a] == pytest.approx(want, rel=1e-7, abs=1e-12)


def test_modulated_coefficient_zero_for_disjoint_supports(system2):
    out = modulated_coefficient(DyadicSquare(3, 0, 0), DyadicSquare(3, 7, 7), (50, 50), system2)
    assert np.all(out == 0)


@given(st.integers(0, 5), st.data())
def test_grid_distance_brute_force(level, data):
    I = DyadicSquare(2, 1, 2)
    n = 1 << level
    J = DyadicSquare(level, data.draw(st.integers(0, n - 1)), data.draw(st.integers(0, n - 1)))
    sl = GridSlice(4, tuple(squares_at_level(4, I)))
    assert grid_distance(J, I, 4) == dtree_to_slice(J, sl)


def test_scale_scan_concentrates_one_cycle_per_square(system3):
    s = 2
    I = DyadicSquare(s, 1, 1)
    u = 2 * math.pi * 2.0 ** (2 * s) * np.array([0.6, 0.8])
    scan = scales_decay_scan(I, u, system3, level_max=8)
    assert sum(scan.level_mass.values()) == pytest.approx(1.0)
    assert scan.concentration(2 * s, 2) >= 0.95
    assert scan.case2_rate >= system3.kappa + 0.5
    with pytest.raises(ModulationError):
        scales_decay_scan(I, (1.0, 0.0), system3)


def test_mod_factorization_interior_pairs(system3):
    rng = np.random.default_rng(4)
    I = DyadicSquare(2, 2, 1)
    checked = 0
    for J in squares_at_level(5, I):
        if not plateau_interior(I, J, system3) or rng.random() > 0.3:
            continue
        u = 2.0 ** (4 + 10 * rng.random()) * np.array([0.8, -0.6])
        lhs, rhs, gap = mod_factorization_check(I, J, u, system3, index=int(rng.integers(18)))
        assert gap < 1e-6 * abs(lhs)
        checked += 1
    assert checked >= 5
    with pytest.raises(ModulationError):
        mod_factorization_check(I, DyadicSquare(5, 0, 0), (16, 0), system3)


@pytest.fixture(scope="module")
def kakeya(system2):
    Is = [DyadicSquare(1, 0, 0), DyadicSquare(1, 1, 1)]
    u = ModulationSequence(1, {Is[0]: (5.0, 1.0), Is[1]: (-2.0, 6.0)})
    return build_kakeya_polynomial({Is[0]: 1.0, Is[1]: 2j}, u, system2)


def test_kakeya_coefficients_unimodular_multiples(kakeya):
    for I in kakeya.outer_squares:
        Js, c = kakeya.block_coefficients(I)
        assert np.allclose(np.abs(c), abs(kakeya.b[I]))
        assert kakeya.coefficient(I, Js[3]) == pytest.approx(c[3])
    assert kakeya.sup_norm() == pytest.approx(0.99, rel=1e-9)
    with pytest.raises(ModulationError):
        kakeya.coefficient(kakeya.outer_squares[0], DyadicSquare(2, 3, 3))


def test_martingale_transform(kakeya):
    I0, I1 = kakeya.outer_squares
    g = martingale_transform(kakeya, {I0: -1, I1: 1})
    J = kakeya.inner_squares(I0)[0]
    assert g.coefficient(I0, J) == pytest.approx(-kakeya.coefficient(I0, J))
    assert g.u is kakeya.u
    back = martingale_transform(g, {I0: -1, I1: 1})
    assert back.coefficient(I0, J) == pytest.approx(kakeya.coefficient(I0, J))
    with pytest.raises(ModulationError):
        martingale_transform(kakeya, {I0: 2, I1: 1})
    with pytest.raises(ModulationError):
        martingale_transform(kakeya, {I0: 1})
    s = random_signs(kakeya.outer_squares, np.random.default_rng(0))
    assert set(s.values()) <= {-1, 1}


def test_kakeya_rejects_zero_outer_layer(system2):
    I = DyadicSquare(1, 0, 0)
    u = ModulationSequence(1, {I: (5.0, 0.0)})
    with pytest.raises(ModulationError):
        build_kakeya_polynomial({I: 0.0}, u, system2)


def test_gamma_phase_follows_modulation(system3):
    I = DyadicSquare(2, 1, 1)
    u = np.array([9.6, 12.8])
    res = gamma_coefficients(I, u, 1.0, system3, N=1)
    fit = gamma_phase_covariance(res, I, u)
    assert np.allclose(fit.slope, -u, rtol=0.05)
    assert all(v >= 0 for v in res.tail.values())


def test_translation_commutation(system2):
    assert translation_commutation_check(system2, 2, (0.0, 0.0)) == 0.0
    assert translation_commutation_check(system2, 2, (0.25, 0.0)) < 1e-10
    with pytest.raises(DyadicError):
        translation_commutation_check(system2, 2, (0.1, 0.0))
