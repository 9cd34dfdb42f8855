import numpy as np
import pytest

from alpertlab.alpert import AlpertSystem
from alpertlab.dyadic import DyadicSquare, halos_intersect
from alpertlab.fields import SampledField2D
from alpertlab.frame import (CoefficientMap, FrameContext, FrameError, apply_T, fit_slope,
                             gram_decay_scan, invert_T, largest_contracting_eta,
                             reproduction_residual, square_function, well_localized_scan)


@pytest.fixture(scope="module")
def ctx():
    return FrameContext(AlpertSystem(2, 0.02), 0, 1)


@pytest.fixture(scope="module")
def grid(ctx):
    return ctx.grid()


def _boxes_overlap(a, b):
    return a[0] < b[1] and b[0] < a[1] and a[2] < b[3] and b[2] < a[3]


def test_gram_symmetric_with_unit_diagonal(ctx):
    G = ctx.gram_dense()
    assert np.max(np.abs(G - G.T)) < 1e-14
    assert np.max(np.abs(np.diag(G) - 1)) < 0.2


def test_gram_against_grid_quadrature(ctx, grid):
    d = ctx.dim
    rng = np.random.default_rng(0)
    for _ in range(6):
        i, j = rng.integers(0, len(ctx.squares), 2)
        a, b = rng.integers(0, d, 2)
        ei = np.zeros(ctx.size)
        ej = np.zeros(ctx.size)
        ei[i * d + a] = 1
        ej[j * d + b] = 1
        fi, fj = ctx.synthesize(ei, grid), ctx.synthesize(ej, grid)
        assert fi.inner(fj) == pytest.approx(ctx.gram_dense()[i * d + a, j * d + b], abs=1e-10)


def test_pseudolocality(ctx):
    s = ctx.system
    for I in ctx.squares:
        for J in ctx.squares:
            if not halos_intersect(I, J, ctx.halo_width):
                bI = s.support(I.level, I.ix) + s.support(I.level, I.iy)
                bJ = s.support(J.level, J.ix) + s.support(J.level, J.iy)
                assert not _boxes_overlap(bI, bJ)
                assert np.all(ctx.gram_block(I, J) == 0)


def test_analysis_of_synthesis_is_gram(ctx, grid):
    v = ctx.random_coefficients(np.random.default_rng(1))
    g = ctx.synthesize(v, grid)
    back = ctx.to_vector(ctx.analyze(g))
    assert np.max(np.abs(back - ctx.gram @ ctx.to_vector(v))) < 1e-10


def test_T_self_adjoint(ctx, grid):
    rng = np.random.default_rng(2)
    x, y, wx, wy = grid
    worst = 0.0
    for _ in range(20):
        g1 = SampledField2D(x, y, wx, wy, rng.standard_normal((len(x), len(y))))
        g2 = SampledField2D(x, y, wx, wy, rng.standard_normal((len(x), len(y))))
        worst = max(worst, abs(apply_T(ctx, g1).inner(g2) - g1.inner(apply_T(ctx, g2))))
    assert worst < 1e-8


def test_neumann_converges_geometrically(ctx):
    v = ctx.to_vector(ctx.random_coefficients(np.random.default_rng(3)))
    _, info = ctx.neumann(v, tol=1e-10)
    assert info["max_ratio"] < 1
    assert info["contraction"] < 0.5
    assert info["norms"][-1] < 1e-10 * info["norms"][0]


def test_contraction_estimate_matches_spectral_norm(ctx):
    G = ctx.gram_dense()
    exact = np.linalg.norm(np.eye(ctx.size) - G, 2)
    assert ctx.contraction_estimate(iterations=200) == pytest.approx(exact, rel=1e-3)


def test_reproduction_gram_and_grid_paths_agree(ctx, grid):
    c = ctx.random_coefficients(np.random.default_rng(4))
    r1, _ = reproduction_residual(ctx, c, tol=1e-6)
    r2, _ = reproduction_residual(ctx, c, tol=1e-6, grid=grid)
    assert r1 < 1e-5 and r2 == pytest.approx(r1, rel=1e-3, abs=1e-9)
    r3, _ = reproduction_residual(ctx, c, tol=1e-10)
    assert r3 < r1


def test_field_inverse_matches_coefficient_inverse(ctx, grid):
    v = ctx.to_vector(ctx.random_coefficients(np.random.default_rng(5)))
    f = ctx.synthesize(v, grid)
    inv, info = invert_T(ctx, f, tol=1e-9)
    coef, _ = ctx.neumann(v, tol=1e-12)
    assert (inv - ctx.synthesize(coef, grid)).norm() < 1e-6 * f.norm()
    assert info["terms"] > 0


def test_square_function(ctx, grid):
    zero = CoefficientMap(ctx.dim, window=ctx.window)
    sq, norm = square_function(ctx, zero, grid)
    assert norm == 0.0
    one = CoefficientMap(ctx.dim, {DyadicSquare(1, 0, 1): np.eye(ctx.dim)[3]})
    sq, norm = square_function(ctx, one, grid)
    f = ctx.synthesize(one, grid)
    assert 0.9 <= norm / f.norm() <= 1.1
    rng = np.random.default_rng(6)
    ratios = []
    for _ in range(5):
        c = ctx.random_coefficients(rng)
        ratios.append(square_function(ctx, c, grid)[1] / ctx.synthesize(c, grid).norm())
    assert 0.5 < min(ratios) and max(ratios) < 2


def test_coefficient_map_window_and_roundtrip(ctx):
    c = CoefficientMap(ctx.dim, window=(0, 1))
    with pytest.raises(FrameError):
        c[DyadicSquare(2, 0, 0)] = np.zeros(ctx.dim)
    c[DyadicSquare(1, 1, 1), 2] = 3.0
    v = ctx.to_vector(c)
    assert ctx.from_vector(v, drop_zero=True)[DyadicSquare(1, 1, 1), 2] == 3.0
    assert c.max_abs() == 3.0 and len(c.rows()) == ctx.dim


def test_fit_slope_on_synthetic_rows():
    rows = [(d, 2.0 ** (5 - 3 * d), 1) for d in range(9)]
    slope, icpt, _ = fit_slope(rows, 2, 6)
    assert slope == pytest.approx(-3) and icpt == pytest.approx(5)


def test_scan_windows():
    with pytest.raises(FrameError):
        FrameContext(AlpertSystem(2, 0.02), 2, 1)
    small = FrameContext(AlpertSystem(2, 0.02), 0, 2)
    with pytest.raises(FrameError):
        gram_decay_scan(small)
    big = FrameContext(AlpertSystem(2, 0.02), 0, 3)
    g = gram_decay_scan(big)
    w1 = well_localized_scan(big, 1)
    assert g.as_dict()[0] == pytest.approx(1, abs=0.2)
    assert w1.as_dict()[0] == pytest.approx(1, abs=0.3)
    assert all(c > 0 for _, _, c in g.rows)


def test_largest_contracting_eta():
    best, report = largest_contracting_eta(2, 0, 1, etas=[0.02, 0.05])
    assert best in (0.02, 0.05)
    assert all(r < 1 for e, r in report if e <= best)
