import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from alpertlab.dyadic import (ROOT, DyadicError, DyadicSquare, GridSlice, box_distance, dtree,
                              dtree_to_slice, fit_omega_constant, halo, halos_intersect,
                              min_pairwise_gap, nearest_common_ancestor, nu_disjoint_triple,
                              omega_count, separated_slice, squares_at_level, window_squares)


@st.composite
def squares(draw, max_level=6):
    s = draw(st.integers(0, max_level))
    n = 1 << s
    return DyadicSquare(s, draw(st.integers(0, n - 1)), draw(st.integers(0, n - 1)))


def test_children_of_unit_square():
    kids = ROOT.children()
    assert [k.bounds for k in kids] == [(0, .5, 0, .5), (.5, 1, 0, .5), (0, .5, .5, 1), (.5, 1, .5, 1)]


def test_children_index_arithmetic():
    kids = DyadicSquare(3, 5, 2).children()
    assert {k.level for k in kids} == {4}
    assert {(k.ix, k.iy) for k in kids} == set(itertools.product((10, 11), (4, 5)))


def test_children_depth_limit():
    with pytest.raises(DyadicError):
        DyadicSquare(4, 0, 0).children(max_level=4)


@given(squares())
def test_children_tile_parent(Q):
    kids = Q.children()
    assert sum(k.side ** 2 for k in kids) == pytest.approx(Q.side ** 2)
    assert all(Q.contains(k) and k.parent == Q for k in kids)
    for a, b in itertools.combinations(kids, 2):
        x0, x1, y0, y1 = (max(a.bounds[0], b.bounds[0]), min(a.bounds[1], b.bounds[1]),
                          max(a.bounds[2], b.bounds[2]), min(a.bounds[3], b.bounds[3]))
        assert (x1 - x0) * (y1 - y0) <= 0 or x1 <= x0 or y1 <= y0


@given(squares())
def test_address_roundtrip(Q):
    assert DyadicSquare.parse(Q.address) == Q


def test_super_squares_contain_unit():
    big = DyadicSquare(-1, 0, 0)
    assert big.side == 2.0 and big.contains(ROOT) and ROOT.ancestor(-2) == DyadicSquare(-2, 0, 0)


def test_dtree_basic():
    I = DyadicSquare(3, 5, 2)
    assert dtree(I, I) == 0
    assert dtree(I, I.parent) == 1
    a, b = ROOT.children()[:2]
    assert dtree(a, b) == 2


def _path_length(I, J):
    # brute force: climb both to every common level and take the shortest join
    best = math.inf
    for L in range(0, min(I.level, J.level) + 1):
        if I.ancestor(L) == J.ancestor(L):
            best = min(best, I.level + J.level - 2 * L)
    return best


def test_dtree_matches_brute_force_and_is_metric():
    sq = window_squares(0, 3)
    for I, J in itertools.product(sq, repeat=2):
        d = dtree(I, J)
        assert d == _path_length(I, J) == dtree(J, I)
        assert (d == 0) == (I == J)
    rng = np.random.default_rng(1)
    for _ in range(2000):
        I, J, K = (sq[i] for i in rng.integers(0, len(sq), 3))
        assert dtree(I, K) <= dtree(I, J) + dtree(J, K)


def test_dtree_rejects_other_trees():
    with pytest.raises(DyadicError):
        dtree(DyadicSquare(0, 1, 0), ROOT)
    assert dtree(DyadicSquare(0, 1, 0), ROOT, top=-1) == 2


def test_nearest_common_ancestor():
    I, J = DyadicSquare(3, 0, 0), DyadicSquare(3, 1, 1)
    assert nearest_common_ancestor(I, J) == DyadicSquare(2, 0, 0)


def test_dtree_to_slice():
    sl = separated_slice(3)
    member = sl.squares[0]
    assert dtree_to_slice(member, sl) == 0
    assert dtree_to_slice(member.children()[0].parent.children()[0], sl) == 1
    with pytest.raises(DyadicError):
        dtree_to_slice(member, GridSlice(3, ()))


@given(squares(max_level=5))
def test_dtree_to_slice_brute_force(J):
    sl = GridSlice(3, tuple(squares_at_level(3)))
    assert dtree_to_slice(J, sl) == min(_path_length(J, I) for I in sl)


def test_separated_slice():
    assert len(separated_slice(1)) == 1
    for s in (1, 2, 3):
        classes = [separated_slice(s, (a, b)) for a in (0, 1) for b in (0, 1)]
        assert sorted(Q for c in classes for Q in c) == sorted(squares_at_level(s))
        for c in classes:
            assert min_pairwise_gap(c.squares) >= 2.0 ** -s - 1e-15
    with pytest.raises(DyadicError):
        separated_slice(0)


def test_halo_membership():
    J = DyadicSquare(1, 0, 0)
    h = halo(J, 0.1)
    K = J.children()[0]
    assert not h.contains(*K.center)
    assert h.contains(K.bounds[1], K.center[1])
    with pytest.raises(DyadicError):
        halo(J, 1.0)


@pytest.mark.parametrize("eta", [0.05, 0.1])
def test_halo_area_monte_carlo(eta):
    J = DyadicSquare(0, 0, 0)
    h = halo(J, eta)
    rng = np.random.default_rng(7)
    lo, hi = -0.1, 1.1
    n = 1_000_000
    x, y = rng.uniform(lo, hi, n), rng.uniform(lo, hi, n)
    mc = np.mean(h.contains(x, y)) * (hi - lo) ** 2
    assert mc == pytest.approx(h.area, rel=0.01)
    # frames of neighbouring children overlap, so the union is below 16 eta |K|
    assert h.area <= 16 * eta * 0.25 + 1e-12


def _rects(H):
    return [(o, i) for o, i in H.frames]


def _brute_meet(I, J, eta, n=400):
    hI, hJ = halo(I, eta), halo(J, eta)
    x0 = min(I.bounds[0], J.bounds[0]) - eta
    x1 = max(I.bounds[1], J.bounds[1]) + eta
    y0 = min(I.bounds[2], J.bounds[2]) - eta
    y1 = max(I.bounds[3], J.bounds[3]) + eta
    # include every frame edge so thin strips are sampled
    edges_x = {v for H in (hI, hJ) for o, i in H.frames for v in (o[0], o[1], i[0], i[1])}
    edges_y = {v for H in (hI, hJ) for o, i in H.frames for v in (o[2], o[3], i[2], i[3])}
    xs = np.union1d(np.linspace(x0, x1, n), sorted(edges_x))
    ys = np.union1d(np.linspace(y0, y1, n), sorted(edges_y))
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return bool(np.any(hI.contains(X, Y) & hJ.contains(X, Y)))


def test_halos_intersect_oracle():
    eta = 0.05
    base = DyadicSquare(2, 1, 1)
    assert halos_intersect(base, base, eta)
    for dx, dy in itertools.product((-1, 0, 1), repeat=2):
        J = DyadicSquare(2, 1 + dx, 1 + dy)
        assert halos_intersect(base, J, eta) == _brute_meet(base, J, eta)
    for J in squares_at_level(3):
        assert halos_intersect(base, J, eta) == _brute_meet(base, J, eta)


def test_halos_far_apart():
    I, J = DyadicSquare(3, 0, 0), DyadicSquare(3, 7, 7)
    assert box_distance(I.bounds, J.bounds) > 2 * (I.side + J.side)
    assert not halos_intersect(I, J, 0.05)


def test_nu_disjoint_triple():
    nu = 0.125
    a, b, c = DyadicSquare(3, 0, 0), DyadicSquare(3, 3, 0), DyadicSquare(3, 0, 3)
    assert nu_disjoint_triple(a, b, c, nu)
    assert not nu_disjoint_triple(a, a, c, nu)
    with pytest.raises(DyadicError):
        nu_disjoint_triple(a, b, c, 1.5)


def test_nu_disjoint_random_triples():
    rng = np.random.default_rng(3)
    sq = squares_at_level(3)
    for _ in range(300):
        tri = [sq[i] for i in rng.choice(len(sq), 3, replace=False)]
        d = [box_distance(p.bounds, q.bounds) for p, q in itertools.combinations(tri, 2)]
        assert nu_disjoint_triple(*tri, 0.125) == (min(d) >= 0.125)


def test_omega_counts_bounded():
    J = DyadicSquare(2, 1, 1)
    counts = [(L, omega_count(J, L, 5, 0.05)) for L in range(0, 6)]
    assert counts[0] == (0, 1)
    c = fit_omega_constant(counts)
    assert all(n <= max(4 ** (L - c), L) + 1e-9 for L, n in counts)
