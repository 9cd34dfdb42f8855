import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from alpertlab.dyadic import DyadicSquare
from alpertlab.extension import (UNIT_PLACEMENT, ExtensionError, FatherPieceExtension,
                                 FieldExtension, FrequencyGrid, KakeyaExtension, Placement,
                                 extension_at, fourier_extension, fourier_square_function,
                                 kakeya_extension, kakeya_square_function, khintchine_trilinear,
                                 lq_norm_ball, trilinear_norm)
from alpertlab.fields import SampledField2D
from alpertlab.modulation import (ModulationSequence, build_kakeya_polynomial, father_wavelet)
from alpertlab.quadrature import composite_rule
from alpertlab.separable import ResolutionError

g = lambda y: 1 + y
h = lambda y: y ** 2 - 0.3


def _field(n_spacing=0.01):
    y, w = composite_rule([0, 1], order=8, max_spacing=n_spacing)
    return SampledField2D(y, y, w, w, np.outer(g(y), h(y)))


def _axis_oracle(fn, a, c, pl, axis):
    def part(trig):
        return quad(lambda y: trig(-(p := pl.corner[axis] + pl.side * y) * a - p * p * c) * fn(y),
                    0, 1, limit=400, epsabs=1e-14)[0]
    return pl.side * (part(math.cos) + 1j * part(math.sin))


def test_extension_matches_1d_quadrature_oracle():
    f = _field()
    pl = UNIT_PLACEMENT
    rng = np.random.default_rng(0)
    xi = rng.uniform(-30, 30, size=(10, 3))
    got = extension_at(f, xi, pl)
    for v, (a, b, c) in zip(got, xi):
        want = _axis_oracle(g, a, c, pl, 0) * _axis_oracle(h, b, c, pl, 1)
        assert abs(v - want) < 1e-6 * abs(want)


def test_cube_agrees_with_scattered_evaluation():
    f = _field()
    grid = FrequencyGrid(3.0, 0.5)
    F = fourier_extension(f, grid, Placement((0.1, -0.4), 0.3))
    a = grid.axis
    pts = [(0, 3, 5), (12, 1, 6), (6, 6, 6)]
    direct = extension_at(f, [(a[i], a[j], a[k]) for i, j, k in pts], Placement((0.1, -0.4), 0.3))
    for (i, j, k), v in zip(pts, direct):
        assert F.at(i, j, k) == pytest.approx(v, rel=1e-12)
    centre = len(a) // 2
    assert F.at(centre, centre, centre) == pytest.approx(0.3 ** 2 * f.integrate())


def test_coarse_source_grid_rejected():
    y = np.linspace(0, 1, 5)
    w = np.full(5, 0.25)
    f = SampledField2D(y, y, w, w, np.ones((5, 5)))
    with pytest.raises(ResolutionError):
        FieldExtension(f, FrequencyGrid(200.0, 1.0))


def test_placement_sub():
    Q = DyadicSquare(2, 1, 3)
    sub = UNIT_PLACEMENT.sub(Q)
    assert sub.side == 0.5 * 0.25
    assert sub.corner == (-0.25 + 0.5 * 0.25, -0.25 + 0.5 * 0.75)
    assert sub.physical(1.0, 0) == pytest.approx(UNIT_PLACEMENT.physical(0.5, 0))


def test_father_piece_matches_sampled_modulated_extension():
    I = DyadicSquare(1, 1, 0)
    u = ModulationSequence(1, {I: (9.0, -5.0)})
    grid = FrequencyGrid(4.0, 0.5)
    phi = father_wavelet(I)
    c = 0.7
    mod = np.exp(1j * 9.0 * phi.x)[:, None] * phi.values * np.exp(-1j * 5.0 * phi.y)[None, :]
    field = phi.with_values(c * mod)
    direct = FieldExtension(field, grid)
    src = FatherPieceExtension({I: c}, u, grid)
    for z in (-2.0, 0.0, 3.5):
        ax, ay = src.piece(I, z)
        assert np.max(np.abs(np.outer(ax, ay) - direct.slice(z))) < 1e-10
    sq = fourier_square_function({I: c}, u, grid)
    k = list(grid.axis).index(3.5)
    assert np.allclose(sq[:, :, k], np.abs(direct.slice(3.5)), atol=1e-10)
    with pytest.raises(ExtensionError):
        fourier_square_function({DyadicSquare(2, 0, 0): c}, u, grid)


@pytest.fixture(scope="module")
def poly(system2):
    Is = [DyadicSquare(1, 0, 0), DyadicSquare(1, 1, 0), DyadicSquare(1, 1, 1)]
    u = ModulationSequence(1, {I: v for I, v in zip(Is, [(4.0, 1.0), (-3.0, 3.0), (0.0, 5.0)])})
    return build_kakeya_polynomial({Is[0]: 1.0, Is[1]: -0.5j, Is[2]: 0.8}, u, system2)


def test_kakeya_extension_matches_sampled_polynomial(poly):
    grid = FrequencyGrid(3.0, 0.5)
    diag = [DyadicSquare(2, i, i) for i in range(4)]
    x, y, wx, wy = poly.system.quadrature_grid(diag, order=12, fine_order=16, fine_panels=8)
    f = SampledField2D(x, y, wx, wy, poly.evaluate(x, y))
    direct = FieldExtension(f, grid)
    src = KakeyaExtension(poly, grid)
    for z in (-3.0, 1.0):
        assert np.max(np.abs(src.slice(z) - direct.slice(z))) < 1e-9 * np.max(np.abs(direct.slice(z)))


def test_singleton_outer_layer_mc_equals_square(system2):
    I = DyadicSquare(1, 0, 1)
    u = ModulationSequence(1, {I: (4.0, 4.0)})
    f = build_kakeya_polynomial({I: 1.0}, u, system2)
    res = khintchine_trilinear(f, f, f, 4.0, n_samples=50, radius=2.0, spacing=0.5)
    assert res.mc_mean == pytest.approx(res.square_value, rel=1e-12)
    assert res.plain == pytest.approx(res.square_value, rel=1e-12)
    grid = FrequencyGrid(2.0, 0.5)
    assert np.allclose(kakeya_square_function(f, grid), np.abs(kakeya_extension(f, grid).values))
    with pytest.raises(ExtensionError):
        khintchine_trilinear(f, f, f, 4.0, n_samples=10, radius=2.0)


def test_khintchine_ratio_bounded(poly):
    res = khintchine_trilinear(poly, poly, poly, 4.0, n_samples=200, radius=3.0, seed=3)
    assert 1 / 3 <= res.ratio <= 3
    assert res.mc_stderr < res.mc_mean


def test_lq_norm_ball():
    grid = FrequencyGrid(2.0, 0.5)
    n = len(grid.axis)
    from alpertlab.extension import ExtensionField
    F = ExtensionField(grid, np.ones((n, n, n)))
    assert lq_norm_ball(F, 2) == pytest.approx(math.sqrt(grid.weight * grid.ball_count()))
    assert lq_norm_ball(F, 1, R=1.0) == pytest.approx(grid.weight * grid.ball_count(1.0))
    with pytest.raises(ExtensionError):
        lq_norm_ball(F, 2, R=3.0)
    with pytest.raises(ExtensionError):
        lq_norm_ball(F, 0)
    with pytest.raises(ExtensionError):
        FrequencyGrid(2.0, 1.5)


def test_trilinear_norm_homogeneous_and_warns():
    f = _field(0.02)
    base = trilinear_norm(f, f, f, 4.0, 1, spacing=1.0)
    assert trilinear_norm(2 * f, f, f, 4.0, 1, spacing=1.0) == pytest.approx(2 * base, rel=1e-12)
    a = DyadicSquare(3, 0, 0)
    with pytest.warns(UserWarning):
        trilinear_norm(f, f, f, 4.0, 1, spacing=1.0, squares=(a, a, a), nu=0.125)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        trilinear_norm(f, f, f, 4.0, 1, spacing=1.0,
                       squares=(a, DyadicSquare(3, 3, 0), DyadicSquare(3, 0, 3)), nu=0.125)
